//! Virtual-cycle prices and the per-run ledger.

use std::fmt;

/// Prices and compilation policy knobs. All prices are in virtual cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub interp_node_cost: u64,
    pub compiled_node_cost: u64,
    pub guard_cost: u64,
    /// Extra price of an array access in compiled code whose index could
    /// not be proven in bounds.
    pub bounds_check_cost: u64,
    pub call_overhead_interp: u64,
    pub call_overhead_compiled: u64,
    pub deopt_penalty: u64,
    /// Hotness (invocations + back-edges) that triggers compilation.
    pub compile_threshold: u64,
    pub min_profile_samples: u64,
    pub max_inlinee_size: usize,
    pub max_compiled_size: usize,
    pub max_inline_targets: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            interp_node_cost: 10,
            compiled_node_cost: 1,
            guard_cost: 1,
            bounds_check_cost: 8,
            call_overhead_interp: 20,
            call_overhead_compiled: 10,
            deopt_penalty: 1000,
            compile_threshold: 100,
            min_profile_samples: 16,
            max_inlinee_size: 60,
            max_compiled_size: 1200,
            max_inline_targets: 2,
        }
    }
}

impl CostModel {
    /// Field names accepted by [`CostModel::set`], in declaration order.
    pub const KEYS: [&'static str; 12] = [
        "interp_node_cost",
        "compiled_node_cost",
        "guard_cost",
        "bounds_check_cost",
        "call_overhead_interp",
        "call_overhead_compiled",
        "deopt_penalty",
        "compile_threshold",
        "min_profile_samples",
        "max_inlinee_size",
        "max_compiled_size",
        "max_inline_targets",
    ];

    /// Sets a field by name. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: u64) -> bool {
        match key {
            "interp_node_cost" => self.interp_node_cost = value,
            "compiled_node_cost" => self.compiled_node_cost = value,
            "guard_cost" => self.guard_cost = value,
            "bounds_check_cost" => self.bounds_check_cost = value,
            "call_overhead_interp" => self.call_overhead_interp = value,
            "call_overhead_compiled" => self.call_overhead_compiled = value,
            "deopt_penalty" => self.deopt_penalty = value,
            "compile_threshold" => self.compile_threshold = value,
            "min_profile_samples" => self.min_profile_samples = value,
            "max_inlinee_size" => self.max_inlinee_size = value as usize,
            "max_compiled_size" => self.max_compiled_size = value as usize,
            "max_inline_targets" => self.max_inline_targets = value as usize,
            _ => return false,
        }
        true
    }

    pub fn check(&self) -> Result<(), String> {
        let prices = [
            ("interp_node_cost", self.interp_node_cost),
            ("compiled_node_cost", self.compiled_node_cost),
            ("guard_cost", self.guard_cost),
            ("bounds_check_cost", self.bounds_check_cost),
            ("call_overhead_interp", self.call_overhead_interp),
            ("call_overhead_compiled", self.call_overhead_compiled),
            ("deopt_penalty", self.deopt_penalty),
        ];
        if let Some((k, _)) = prices.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{k} must be positive"));
        }
        if self.compiled_node_cost >= self.interp_node_cost {
            return Err("compiled_node_cost must be below interp_node_cost".into());
        }
        if self.max_inline_targets == 0 {
            return Err("max_inline_targets must be at least 1".into());
        }
        Ok(())
    }
}

/// Accumulated virtual time and event counts of one VM instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CostLedger {
    pub total_cycles: u64,
    pub deopt_events: u64,
    pub compile_events: u64,
}

impl CostLedger {
    #[inline]
    pub fn charge(&mut self, cycles: u64) {
        self.total_cycles += cycles;
    }

    /// Component-wise difference against an earlier snapshot.
    pub fn since(&self, earlier: &CostLedger) -> CostLedger {
        CostLedger {
            total_cycles: self.total_cycles - earlier.total_cycles,
            deopt_events: self.deopt_events - earlier.deopt_events,
            compile_events: self.compile_events - earlier.compile_events,
        }
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycles={} compiles={} deopts={}",
            self.total_cycles, self.compile_events, self.deopt_events
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let m = CostModel::default();
        m.check().unwrap();
        assert_eq!(m.compile_threshold, 100);
        assert_eq!(m.max_inline_targets, 2);
    }

    #[test]
    fn set_by_name_covers_all_keys() {
        let mut m = CostModel::default();
        for (i, k) in CostModel::KEYS.iter().enumerate() {
            assert!(m.set(k, 1000 + i as u64), "{k}");
        }
        assert!(!m.set("nope", 1));
        assert_eq!(m.max_inline_targets, 1011);
    }

    #[test]
    fn check_rejects_bad_models() {
        let mut m = CostModel::default();
        m.compiled_node_cost = m.interp_node_cost;
        assert!(m.check().is_err());
        let mut m = CostModel::default();
        m.guard_cost = 0;
        assert!(m.check().is_err());
        let mut m = CostModel::default();
        m.max_inline_targets = 0;
        assert!(m.check().is_err());
    }
}
