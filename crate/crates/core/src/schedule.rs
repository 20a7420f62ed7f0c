//! Multi-stage training schedule as a queryable state machine.
//!
//! A plan is a list of stages, each split into phases by step fraction.
//! Every phase names the parameter groups it trains and its learning rate.
//! Budgets are declared figures; [`budget_check`] compares them against
//! corpus statistics without ever rewriting them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokens_for_hours, ADAPTER_RATE_HZ};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("{0}")]
    Argument(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
}

type Result<T> = std::result::Result<T, ScheduleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    AudioEncoder,
    AudioAdapter,
    Thinker,
    Talker,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::AudioEncoder,
        ParamGroup::AudioAdapter,
        ParamGroup::Thinker,
        ParamGroup::Talker,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    S1GeneralAudio,
    S2AlignmentCpt,
    S3InstructionFt,
    PostTraining,
    TalkerTraining,
    EndToEnd,
}

impl StageId {
    pub const ALL: [StageId; 6] = [
        StageId::S1GeneralAudio,
        StageId::S2AlignmentCpt,
        StageId::S3InstructionFt,
        StageId::PostTraining,
        StageId::TalkerTraining,
        StageId::EndToEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::S1GeneralAudio => "s1_general_audio",
            StageId::S2AlignmentCpt => "s2_alignment_cpt",
            StageId::S3InstructionFt => "s3_instruction_ft",
            StageId::PostTraining => "post_training",
            StageId::TalkerTraining => "talker_training",
            StageId::EndToEnd => "end_to_end",
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = ScheduleError;

    /// Accepts full names and the short forms `s1`, `s2`, `s3`.
    fn from_str(s: &str) -> Result<Self> {
        let short = match s {
            "s1" => Some(StageId::S1GeneralAudio),
            "s2" => Some(StageId::S2AlignmentCpt),
            "s3" => Some(StageId::S3InstructionFt),
            _ => None,
        };
        short
            .or_else(|| StageId::ALL.into_iter().find(|id| id.as_str() == s))
            .ok_or_else(|| ScheduleError::UnknownStage(s.to_string()))
    }
}

/// A budget figure with its unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", content = "value", rename_all = "snake_case")]
pub enum Quantity {
    Hours(f64),
    Tokens(f64),
    Samples(f64),
}

impl Quantity {
    pub fn value(self) -> f64 {
        match self {
            Quantity::Hours(v) | Quantity::Tokens(v) | Quantity::Samples(v) => v,
        }
    }

    fn scaled(self, k: f64) -> Quantity {
        match self {
            Quantity::Hours(v) => Quantity::Hours(v * k),
            Quantity::Tokens(v) => Quantity::Tokens(v * k),
            Quantity::Samples(v) => Quantity::Samples(v * k),
        }
    }

    /// Token count, converting hours at the adapter rate. Samples have no
    /// token equivalent.
    fn as_tokens(self) -> Option<f64> {
        match self {
            Quantity::Tokens(v) => Some(v),
            Quantity::Hours(h) => tokens_for_hours(h, ADAPTER_RATE_HZ).ok().map(|t| t as f64),
            Quantity::Samples(_) => None,
        }
    }
}

/// One declared budget figure, optionally broken into component classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLine {
    pub declared: Quantity,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub components: BTreeMap<String, Quantity>,
}

impl BudgetLine {
    pub fn flat(declared: Quantity) -> Self {
        BudgetLine {
            declared,
            components: BTreeMap::new(),
        }
    }

    pub fn with_components(declared: Quantity, components: &[(&str, Quantity)]) -> Self {
        BudgetLine {
            declared,
            components: components.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub fraction: f64,
    pub trainable: BTreeSet<ParamGroup>,
    /// `None` where no rate is published.
    pub lr: Option<f64>,
}

impl Phase {
    fn new(fraction: f64, trainable: &[ParamGroup], lr: Option<f64>) -> Self {
        Phase {
            fraction,
            trainable: trainable.iter().copied().collect(),
            lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage_id: StageId,
    /// `None` where no step count is published.
    pub total_steps: Option<u64>,
    pub phases: Vec<Phase>,
    pub token_budget: BTreeMap<String, BudgetLine>,
}

impl StageSpec {
    pub fn validate(&self) -> Result<()> {
        let id = self.stage_id;
        if self.phases.is_empty() {
            return Err(ScheduleError::Invalid(format!("{id}: no phases")));
        }
        if self.total_steps == Some(0) {
            return Err(ScheduleError::Invalid(format!("{id}: total_steps must be at least 1")));
        }
        let sum: f64 = self.phases.iter().map(|p| p.fraction).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScheduleError::Invalid(format!("{id}: phase fractions sum to {sum}")));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.fraction >= 0.0 && p.fraction.is_finite()) {
                return Err(ScheduleError::Invalid(format!(
                    "{id}: phase {i} fraction {}",
                    p.fraction
                )));
            }
            if let Some(lr) = p.lr {
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(ScheduleError::Invalid(format!("{id}: phase {i} lr {lr}")));
                }
            }
            if p.trainable.is_empty() {
                return Err(ScheduleError::Invalid(format!("{id}: phase {i} trains nothing")));
            }
        }
        Ok(())
    }

    pub fn with_total_steps(mut self, total: u64) -> Self {
        self.total_steps = Some(total);
        self
    }

    /// Union of trainable groups over all phases.
    pub fn declared_groups(&self) -> BTreeSet<ParamGroup> {
        self.phases.iter().flat_map(|p| p.trainable.iter().copied()).collect()
    }

    /// Inclusive step range `(first, last)` per phase for `total` steps; an
    /// empty phase has `first == last + 1`.
    ///
    /// Phase `k` ends at `floor(cumulative_fraction_k * total)`. When the
    /// floor leaves a positive-fraction first phase empty it is given one
    /// step, provided there are enough steps for every positive phase.
    pub fn phase_ranges(&self, total: u64) -> Vec<(u64, u64)> {
        let n = self.phases.len();
        let mut ends = Vec::with_capacity(n);
        let mut cum = 0.0;
        for (k, p) in self.phases.iter().enumerate() {
            cum += p.fraction;
            let end = if k + 1 == n {
                total
            } else {
                ((cum * total as f64 + 1e-9).floor() as u64).min(total)
            };
            ends.push(end);
        }
        let positive = self.phases.iter().filter(|p| p.fraction > 0.0).count() as u64;
        if ends[0] == 0 && self.phases[0].fraction > 0.0 && total >= positive {
            ends[0] = 1;
        }
        for k in 1..n {
            ends[k] = ends[k].max(ends[k - 1]);
        }
        let mut start = 1;
        ends.into_iter()
            .map(|end| {
                let r = (start, end);
                start = end + 1;
                r
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub stages: Vec<StageSpec>,
}

impl Plan {
    pub fn stage(&self, id: StageId) -> Result<&StageSpec> {
        self.stages
            .iter()
            .find(|s| s.stage_id == id)
            .ok_or_else(|| ScheduleError::UnknownStage(id.to_string()))
    }

    pub fn stage_mut(&mut self, id: StageId) -> Result<&mut StageSpec> {
        self.stages
            .iter_mut()
            .find(|s| s.stage_id == id)
            .ok_or_else(|| ScheduleError::UnknownStage(id.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.stages {
            if !seen.insert(s.stage_id) {
                return Err(ScheduleError::Invalid(format!("duplicate stage {}", s.stage_id)));
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Plan> {
        let plan: Plan = serde_json::from_str(s).map_err(|e| ScheduleError::Invalid(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Sum of every token-denominated declared figure.
    pub fn declared_token_total(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.token_budget.values())
            .filter_map(|l| match l.declared {
                Quantity::Tokens(t) => Some(t),
                _ => None,
            })
            .sum()
    }
}

/// Headline mixed-corpus size for the pretraining stages.
pub const DECLARED_PRETRAIN_TOKENS: f64 = 316e9;

/// The published six-stage schedule. Step counts are unset; unpublished
/// learning rates are `None`.
pub fn build_default_plan() -> Plan {
    use ParamGroup::*;
    use Quantity::*;

    let audio_side = [AudioEncoder, AudioAdapter, Thinker];
    let post_samples = || {
        BTreeMap::from([
            (
                "dialogue".to_string(),
                BudgetLine::with_components(
                    Samples(6e6),
                    &[
                        ("authentic_dialogue", Samples(4e6)),
                        ("constructed_dialogue", Samples(2e6)),
                    ],
                ),
            ),
            ("text_instruction".to_string(), BudgetLine::flat(Samples(12e6))),
        ])
    };

    let stages = vec![
        StageSpec {
            stage_id: StageId::S1GeneralAudio,
            total_steps: None,
            phases: vec![
                Phase::new(0.30, &[AudioAdapter], Some(4e-5)),
                Phase::new(0.70, &[AudioEncoder], Some(4e-5)),
            ],
            token_budget: BTreeMap::from([(
                "speech".to_string(),
                BudgetLine::with_components(
                    Tokens(14.4e9),
                    &[("asr", Hours(256_000.0)), ("audio_caption", Hours(64_000.0))],
                ),
            )]),
        },
        StageSpec {
            stage_id: StageId::S2AlignmentCpt,
            total_steps: None,
            phases: vec![Phase::new(1.0, &audio_side, Some(1e-5))],
            token_budget: BTreeMap::from([
                (
                    "audio".to_string(),
                    BudgetLine::with_components(
                        Tokens(144e9),
                        &[
                            ("instruction_augmented", Hours(2_560_000.0)),
                            ("dialogue_structure", Hours(480_000.0)),
                            ("real_life", Hours(100_000.0)),
                            ("audio_qa", Hours(64_000.0)),
                        ],
                    ),
                ),
                ("text".to_string(), BudgetLine::flat(Tokens(144e9))),
            ]),
        },
        StageSpec {
            stage_id: StageId::S3InstructionFt,
            total_steps: None,
            phases: vec![Phase::new(1.0, &audio_side, Some(2e-6))],
            token_budget: BTreeMap::from([
                ("multitask_audio".to_string(), BudgetLine::flat(Hours(320_000.0))),
                ("pure_text".to_string(), BudgetLine::flat(Tokens(12.8e9))),
            ]),
        },
        StageSpec {
            stage_id: StageId::PostTraining,
            total_steps: None,
            phases: vec![Phase::new(1.0, &audio_side, None)],
            token_budget: post_samples(),
        },
        StageSpec {
            stage_id: StageId::TalkerTraining,
            total_steps: None,
            phases: vec![Phase::new(1.0, &[Talker], None)],
            token_budget: BTreeMap::from([("talker_speech".to_string(), BudgetLine::flat(Hours(2.71e6)))]),
        },
        StageSpec {
            stage_id: StageId::EndToEnd,
            total_steps: None,
            phases: vec![Phase::new(1.0, &ParamGroup::ALL, None)],
            token_budget: post_samples(),
        },
    ];
    Plan { stages }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDirective {
    pub stage: StageId,
    pub step: u64,
    pub phase: usize,
    pub trainable: BTreeSet<ParamGroup>,
    pub lr: Option<f64>,
    /// Declared budget not yet consumed, assuming uniform consumption per step.
    pub budget_remaining: BTreeMap<String, Quantity>,
}

/// Directive for `step` (1-based) of `stage`.
pub fn directive_at(plan: &Plan, stage: StageId, step: u64) -> Result<StepDirective> {
    let spec = plan.stage(stage)?;
    let total = spec
        .total_steps
        .ok_or_else(|| ScheduleError::Argument(format!("{stage}: total_steps is unspecified")))?;
    if step < 1 || step > total {
        return Err(ScheduleError::Argument(format!("step {step} outside 1..={total}")));
    }
    let ranges = spec.phase_ranges(total);
    let phase = ranges
        .iter()
        .position(|&(a, b)| a <= step && step <= b)
        .expect("phase ranges partition the steps");
    let p = &spec.phases[phase];
    let left = (total - step) as f64 / total as f64;
    Ok(StepDirective {
        stage,
        step,
        phase,
        trainable: p.trainable.clone(),
        lr: p.lr,
        budget_remaining: spec
            .token_budget
            .iter()
            .map(|(k, l)| (k.clone(), l.declared.scaled(left)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetStatus {
    Pass,
    Fail,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub stage: StageId,
    pub class: String,
    pub declared: Quantity,
    pub derived: Option<f64>,
    pub relative_error: Option<f64>,
    pub status: BudgetStatus,
    /// Classes the statistics did not cover.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub tolerance: f64,
    pub entries: Vec<BudgetEntry>,
}

impl BudgetReport {
    pub fn entry(&self, stage: StageId, class: &str) -> Option<&BudgetEntry> {
        self.entries.iter().find(|e| e.stage == stage && e.class == class)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.status == BudgetStatus::Pass)
    }
}

pub const BUDGET_TOLERANCE: f64 = 0.02;

/// Converts `stats` into the unit of each declared line and reports the
/// relative error. A line with components draws every component from
/// `stats`; a flat line draws its own class.
pub fn budget_check(plan: &Plan, stats: &BTreeMap<String, Quantity>) -> BudgetReport {
    let mut entries = Vec::new();
    for spec in &plan.stages {
        for (class, line) in &spec.token_budget {
            let wanted: Vec<&String> = if line.components.is_empty() {
                vec![class]
            } else {
                line.components.keys().collect()
            };
            let missing: Vec<String> = wanted
                .iter()
                .filter(|k| !stats.contains_key(**k))
                .map(|k| k.to_string())
                .collect();
            let derived = if missing.is_empty() {
                wanted
                    .iter()
                    .map(|k| convert(stats[*k], line.declared))
                    .sum::<Option<f64>>()
            } else {
                None
            };
            let declared = line.declared.value();
            let relative_error = derived.map(|d| {
                if declared == 0.0 {
                    d.abs()
                } else {
                    (d - declared).abs() / declared.abs()
                }
            });
            let status = match relative_error {
                None => BudgetStatus::Missing,
                Some(e) if e <= BUDGET_TOLERANCE => BudgetStatus::Pass,
                Some(_) => BudgetStatus::Fail,
            };
            entries.push(BudgetEntry {
                stage: spec.stage_id,
                class: class.clone(),
                declared: line.declared,
                derived,
                relative_error,
                status,
                missing,
            });
        }
    }
    BudgetReport {
        tolerance: BUDGET_TOLERANCE,
        entries,
    }
}

/// `q` in the unit of `target`, if convertible.
fn convert(q: Quantity, target: Quantity) -> Option<f64> {
    match (q, target) {
        (_, Quantity::Tokens(_)) => q.as_tokens(),
        (Quantity::Hours(h), Quantity::Hours(_)) => Some(h),
        (Quantity::Samples(s), Quantity::Samples(_)) => Some(s),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s1(total: u64) -> StageSpec {
        build_default_plan()
            .stage(StageId::S1GeneralAudio)
            .unwrap()
            .clone()
            .with_total_steps(total)
    }

    #[test]
    fn default_plan_learning_rates() {
        let plan = build_default_plan();
        plan.validate().unwrap();
        let lr = |id| plan.stage(id).unwrap().phases.iter().map(|p| p.lr).collect::<Vec<_>>();
        assert_eq!(lr(StageId::S1GeneralAudio), [Some(4e-5), Some(4e-5)]);
        assert_eq!(lr(StageId::S2AlignmentCpt), [Some(1e-5)]);
        assert_eq!(lr(StageId::S3InstructionFt), [Some(2e-6)]);
        assert_eq!(lr(StageId::PostTraining), [None]);
        assert_eq!(plan.stage(StageId::S1GeneralAudio).unwrap().total_steps, None);
    }

    #[test]
    fn default_plan_budget_figures() {
        let plan = build_default_plan();
        let b = |id, c: &str| plan.stage(id).unwrap().token_budget[c].declared;
        assert_eq!(b(StageId::S1GeneralAudio, "speech"), Quantity::Tokens(14.4e9));
        assert_eq!(b(StageId::S2AlignmentCpt, "audio"), Quantity::Tokens(144e9));
        assert_eq!(b(StageId::S2AlignmentCpt, "text"), Quantity::Tokens(144e9));
        assert_eq!(b(StageId::S3InstructionFt, "pure_text"), Quantity::Tokens(12.8e9));
        assert_eq!(b(StageId::PostTraining, "dialogue"), Quantity::Samples(6e6));
        assert_eq!(b(StageId::PostTraining, "text_instruction"), Quantity::Samples(12e6));
        assert_eq!(b(StageId::TalkerTraining, "talker_speech"), Quantity::Hours(2.71e6));
        // 14.4 + 144 + 144 + 12.8 = 315.2 against the headline 316
        let rel = (plan.declared_token_total() - DECLARED_PRETRAIN_TOKENS).abs() / DECLARED_PRETRAIN_TOKENS;
        assert!((rel - 0.8e9 / 316e9).abs() < 1e-12);
    }

    /// Integer-arithmetic oracle for the 30/70 split.
    fn oracle_s1_phase(step: u64, total: u64) -> usize {
        let mut first = 3 * total / 10;
        if first == 0 && total >= 2 {
            first = 1;
        }
        usize::from(step > first)
    }

    #[test]
    fn s1_boundaries_match_oracle() {
        let plan_for = |t| Plan { stages: vec![s1(t)] };
        for total in (1..=10).chain([1000]) {
            let plan = plan_for(total);
            for step in 1..=total {
                let d = directive_at(&plan, StageId::S1GeneralAudio, step).unwrap();
                assert_eq!(d.phase, oracle_s1_phase(step, total), "total {total} step {step}");
            }
        }
    }

    #[test]
    fn s1_examples() {
        let plan = Plan { stages: vec![s1(1000)] };
        let at = |s| directive_at(&plan, StageId::S1GeneralAudio, s).unwrap().trainable;
        assert_eq!(at(300), BTreeSet::from([ParamGroup::AudioAdapter]));
        assert_eq!(at(301), BTreeSet::from([ParamGroup::AudioEncoder]));
        let one = Plan { stages: vec![s1(1)] };
        assert_eq!(
            directive_at(&one, StageId::S1GeneralAudio, 1).unwrap().trainable,
            BTreeSet::from([ParamGroup::AudioEncoder])
        );
    }

    #[test]
    fn out_of_range_and_unspecified() {
        let plan = Plan { stages: vec![s1(10)] };
        assert!(matches!(
            directive_at(&plan, StageId::S1GeneralAudio, 0),
            Err(ScheduleError::Argument(_))
        ));
        assert!(matches!(
            directive_at(&plan, StageId::S1GeneralAudio, 11),
            Err(ScheduleError::Argument(_))
        ));
        let d = build_default_plan();
        assert!(matches!(
            directive_at(&d, StageId::S2AlignmentCpt, 1),
            Err(ScheduleError::Argument(_))
        ));
    }

    #[test]
    fn budget_examples() {
        let plan = build_default_plan();
        let stats = BTreeMap::from([
            ("asr".to_string(), Quantity::Hours(256_000.0)),
            ("audio_caption".to_string(), Quantity::Hours(64_000.0)),
            ("instruction_augmented".to_string(), Quantity::Hours(2_560_000.0)),
            ("dialogue_structure".to_string(), Quantity::Hours(480_000.0)),
            ("real_life".to_string(), Quantity::Hours(100_000.0)),
            ("audio_qa".to_string(), Quantity::Hours(64_000.0)),
        ]);
        let r = budget_check(&plan, &stats);
        let e = r.entry(StageId::S1GeneralAudio, "speech").unwrap();
        assert_eq!(e.derived, Some(14.4e9));
        assert_eq!(e.status, BudgetStatus::Pass);
        let e = r.entry(StageId::S2AlignmentCpt, "audio").unwrap();
        assert_eq!(e.derived, Some(144.18e9));
        assert!((e.relative_error.unwrap() - 0.00125).abs() < 1e-12);
        assert_eq!(e.status, BudgetStatus::Pass);
        assert_eq!(
            r.entry(StageId::S2AlignmentCpt, "text").unwrap().status,
            BudgetStatus::Missing
        );
    }

    #[test]
    fn empty_stats_report_all_missing() {
        let r = budget_check(&build_default_plan(), &BTreeMap::new());
        assert!(!r.entries.is_empty());
        assert!(r.entries.iter().all(|e| e.status == BudgetStatus::Missing));
    }

    #[test]
    fn plan_round_trips() {
        let plan = build_default_plan();
        assert_eq!(Plan::from_json(&plan.to_json()).unwrap(), plan);
    }

    #[test]
    fn stage_names_parse() {
        for id in StageId::ALL {
            assert_eq!(id.as_str().parse::<StageId>().unwrap(), id);
        }
        assert_eq!("s2".parse::<StageId>().unwrap(), StageId::S2AlignmentCpt);
        assert!("s9".parse::<StageId>().is_err());
    }

    fn arb_stage() -> impl Strategy<Value = StageSpec> {
        (prop::collection::vec(1u32..100, 1..5), 1u64..3000).prop_map(|(weights, total)| {
            let sum: u32 = weights.iter().sum();
            let n = weights.len();
            let mut phases: Vec<Phase> = weights
                .iter()
                .enumerate()
                .map(|(i, w)| Phase::new(*w as f64 / sum as f64, &[ParamGroup::ALL[i % 4]], Some(1e-4)))
                .collect();
            // absorb rounding so the fractions sum to one
            let head: f64 = phases[..n - 1].iter().map(|p| p.fraction).sum();
            phases[n - 1].fraction = 1.0 - head;
            StageSpec {
                stage_id: StageId::S1GeneralAudio,
                total_steps: Some(total),
                phases,
                token_budget: BTreeMap::new(),
            }
        })
    }

    proptest! {
        #[test]
        fn phase_ranges_partition_steps(spec in arb_stage()) {
            let total = spec.total_steps.unwrap();
            let ranges = spec.phase_ranges(total);
            prop_assert_eq!(ranges[0].0, 1);
            prop_assert_eq!(ranges.last().unwrap().1, total);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[1].0, w[0].1 + 1);
            }
            for r in &ranges {
                prop_assert!(r.0 <= r.1 + 1);
            }
        }

        #[test]
        fn directives_change_only_at_boundaries(spec in arb_stage()) {
            let total = spec.total_steps.unwrap();
            let ranges = spec.phase_ranges(total);
            let plan = Plan { stages: vec![spec] };
            let mut prev = None;
            for step in 1..=total.min(300) {
                let d = directive_at(&plan, StageId::S1GeneralAudio, step).unwrap();
                if let Some(p) = prev {
                    if p != d.phase {
                        prop_assert_eq!(ranges[d.phase].0, step);
                    }
                    prop_assert!(d.phase >= p);
                }
                prev = Some(d.phase);
            }
        }
    }
}
