use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    StorageWrite,
    StorageRead,
    LogEmit,
    CallBase,
    ValueTransfer,
    ComputeStep,
    ContractCreate,
}

impl StepKind {
    pub const ALL: [StepKind; 7] = [
        StepKind::StorageWrite,
        StepKind::StorageRead,
        StepKind::LogEmit,
        StepKind::CallBase,
        StepKind::ValueTransfer,
        StepKind::ComputeStep,
        StepKind::ContractCreate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::StorageWrite => "storage_write",
            StepKind::StorageRead => "storage_read",
            StepKind::LogEmit => "log_emit",
            StepKind::CallBase => "call_base",
            StepKind::ValueTransfer => "value_transfer",
            StepKind::ComputeStep => "compute_step",
            StepKind::ContractCreate => "contract_create",
        }
    }
}

/// Per-step gas costs. Fixed for the lifetime of a chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSchedule {
    pub storage_write: u64,
    pub storage_read: u64,
    pub log_emit: u64,
    pub call_base: u64,
    pub value_transfer: u64,
    pub compute_step: u64,
    pub contract_create: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            storage_write: 100,
            storage_read: 10,
            log_emit: 15,
            call_base: 40,
            value_transfer: 25,
            compute_step: 1,
            contract_create: 500,
        }
    }
}

impl GasSchedule {
    pub fn cost(&self, kind: StepKind) -> u64 {
        match kind {
            StepKind::StorageWrite => self.storage_write,
            StepKind::StorageRead => self.storage_read,
            StepKind::LogEmit => self.log_emit,
            StepKind::CallBase => self.call_base,
            StepKind::ValueTransfer => self.value_transfer,
            StepKind::ComputeStep => self.compute_step,
            StepKind::ContractCreate => self.contract_create,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match StepKind::ALL.iter().find(|k| self.cost(**k) == 0) {
            Some(k) => Err(format!("gas cost for {} must be at least 1", k.as_str())),
            None => Ok(()),
        }
    }

    /// Gas for a plain value transfer between two accounts.
    pub fn transfer_cost(&self, value: u64) -> u64 {
        self.call_base + if value > 0 { self.value_transfer } else { 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_valid() {
        assert!(GasSchedule::default().validate().is_ok());
        let zero = GasSchedule { log_emit: 0, ..GasSchedule::default() };
        assert!(zero.validate().unwrap_err().contains("log_emit"));
    }
}
