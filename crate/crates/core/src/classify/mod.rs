//! Recurrence classification of the maximum-dater chain.
//!
//! Positive recurrence is equivalent to `Σ_k F̄(T_k) < ∞` almost surely.
//! Convergence of `Σ_n E exp(-Σ_{i<n} F̄(y + T_i))` implies transience, and
//! divergence of `Σ_n E exp(-c Σ_{i≤n} F̄(T_i + w0))` for some `c > 1`
//! implies Harris recurrence. All three are estimated by simulation and
//! combined with closed-form phase diagrams where the model matches one.

mod erickson;
mod phase;
mod series;

use serde::{Deserialize, Serialize};

pub use erickson::{erickson, j_minus, j_plus, Bracket, EricksonError, EricksonReport, WalkVerdict};
pub use phase::{match_phase, AnalyticFinding, Claim};
pub use series::{
    occupation_estimate, recurrence_series, series_grid, tail_series, transience_series, vote, SeriesDiagnostic,
    SeriesKind, SeriesParams, SeriesVerdict, Votes,
};

use crate::engine::ModelSpec;
use crate::regen;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Analytic,
    MonteCarlo,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub n_max: usize,
    pub tail_reps: usize,
    pub series_reps: usize,
    pub grid_ratio: f64,
    /// Partial sums growing slower than `n^slope_threshold` over the last decade converge.
    pub slope_threshold: f64,
    /// Increments that must be exceeded throughout the last decade for divergence.
    pub increment_floor: f64,
    /// Share of replications that must agree on the tail-series verdict.
    pub vote_fraction: f64,
    pub c: f64,
    /// Shift for the transience series; defaults to `w0`.
    pub y: Option<f64>,
    /// Overrides the service median as `w0`.
    pub w0: Option<f64>,
    /// Run the transience and recurrence series even when the tail series converges.
    pub corroborate: bool,
    /// Relative tolerance for the single-server integrals.
    pub quad_tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            n_max: 1_000_000,
            tail_reps: 200,
            series_reps: 1000,
            grid_ratio: std::f64::consts::SQRT_2,
            slope_threshold: 0.05,
            increment_floor: 1e-8,
            vote_fraction: 0.9,
            c: 1.1,
            y: None,
            w0: None,
            corroborate: false,
            quad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticFinding>,
    pub diagnostics: Vec<SeriesDiagnostic>,
    pub notes: String,
}

impl ClassificationReport {
    pub fn diagnostic(&self, kind: SeriesKind) -> Option<&SeriesDiagnostic> {
        self.diagnostics.iter().find(|d| d.kind == kind)
    }
}

/// The closed-form verdict for models in a solved family.
pub fn analytic_phase(m: &ModelSpec) -> Option<ClassificationReport> {
    let finding = match_phase(m)?;
    Some(ClassificationReport {
        verdict: finding.claim.verdict(),
        source: Source::Analytic,
        notes: match finding.claim {
            Claim::NotPositiveRecurrent => "not positive recurrent; transient vs null recurrent unresolved".into(),
            _ => String::new(),
        },
        analytic: Some(finding),
        diagnostics: Vec::new(),
    })
}

/// What the simulated series say on their own.
struct Evidence {
    verdict: Verdict,
    /// Two criteria assert incompatible regimes.
    conflict: bool,
    notes: Vec<String>,
}

fn weigh(tail: SeriesVerdict, transience: Option<SeriesVerdict>, recurrence: Option<SeriesVerdict>) -> Evidence {
    use SeriesVerdict::*;
    let transient = transience == Some(Converges);
    let recurrent = recurrence == Some(Diverges);
    let mut notes = Vec::new();
    let mut conflict = false;
    if transient && recurrent {
        notes.push("transience series converges while recurrence series diverges".into());
        conflict = true;
    }
    if tail == Converges && transient {
        notes.push("tail series converges while transience series converges".into());
        conflict = true;
    }
    let verdict = if conflict {
        Verdict::Inconclusive
    } else {
        match tail {
            Converges => Verdict::PositiveRecurrent,
            Diverges if transient => Verdict::Transient,
            Diverges if recurrent => Verdict::NullRecurrent,
            Diverges => {
                notes.push("not positive recurrent; neither sufficient series criterion decided".into());
                Verdict::Inconclusive
            }
            Inconclusive => {
                notes.push("tail series vote below the supermajority".into());
                Verdict::Inconclusive
            }
        }
    };
    Evidence {
        verdict,
        conflict,
        notes,
    }
}

/// Runs the analytic match and the series criteria and reconciles them.
///
/// A positive-recurrent verdict always requires the tail series to converge.
pub fn classify(m: &ModelSpec, cfg: &ClassifierConfig, stream: &mut RngStream) -> ClassificationReport {
    let analytic = match_phase(m);
    let tail = tail_series(m, cfg, stream);
    let mut diagnostics = vec![tail.clone()];
    let need_refinement = tail.verdict != SeriesVerdict::Converges
        || cfg.corroborate
        || analytic.as_ref().is_some_and(|a| a.claim != Claim::PositiveRecurrent);
    let (mut transience, mut recurrence) = (None, None);
    if need_refinement {
        let w0 = cfg.w0.unwrap_or_else(|| regen::service_median(&m.service));
        let y = cfg.y.unwrap_or(w0);
        let t = transience_series(m, y, cfg, stream);
        let r = recurrence_series(m, w0, cfg.c, cfg, stream);
        transience = Some(t.verdict);
        recurrence = Some(r.verdict);
        diagnostics.push(t);
        diagnostics.push(r);
    }
    let evidence = weigh(tail.verdict, transience, recurrence);
    let mut notes = evidence.notes;

    let (verdict, source) = match &analytic {
        None => (evidence.verdict, Source::MonteCarlo),
        Some(a) => {
            let tail_ok = match a.claim {
                Claim::PositiveRecurrent => tail.verdict == SeriesVerdict::Converges,
                _ => tail.verdict != SeriesVerdict::Converges,
            };
            let contradicted = !tail_ok
                || evidence.conflict
                || (evidence.verdict != Verdict::Inconclusive && !a.claim.admits(evidence.verdict));
            if contradicted {
                notes.push(format!("simulation contradicts the closed-form claim {:?}", a.claim));
                (Verdict::Inconclusive, Source::Both)
            } else if a.claim == Claim::NotPositiveRecurrent {
                if evidence.verdict == Verdict::Inconclusive {
                    (Verdict::Inconclusive, Source::Analytic)
                } else {
                    notes.push("transient vs null recurrent refined by simulation (numerical evidence)".into());
                    (evidence.verdict, Source::Both)
                }
            } else if evidence.verdict == a.claim.verdict() {
                (evidence.verdict, Source::Both)
            } else {
                (a.claim.verdict(), Source::Analytic)
            }
        }
    };
    ClassificationReport {
        verdict,
        source,
        analytic,
        diagnostics,
        notes: notes.join("; "),
    }
}

/// The infinite-server classification next to the single-server drift analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueComparison {
    pub infinite_server: ClassificationReport,
    pub single_server: Result<EricksonReport, String>,
    pub commentary: String,
}

pub fn compare_queues(m: &ModelSpec, cfg: &ClassifierConfig, stream: &mut RngStream) -> QueueComparison {
    let infinite_server = classify(m, cfg, stream);
    let single_server = erickson(m, cfg.quad_tol).map_err(|e| e.to_string());
    let inf_pr = match infinite_server.verdict {
        Verdict::PositiveRecurrent => Some(true),
        Verdict::Inconclusive => None,
        _ => Some(false),
    };
    let describe = |pr: bool| {
        if pr {
            "positive recurrent"
        } else {
            "not positive recurrent"
        }
    };
    let commentary = match (&single_server, inf_pr) {
        (Ok(e), Some(inf)) => {
            let single = e.single_server_positive_recurrent;
            let mut text = format!(
                "GI/GI/∞ maximum dater: {}; GI/GI/1 waiting time: {}",
                describe(inf),
                describe(single)
            );
            text.push_str(match (inf, single) {
                (true, true) => "; both queues positive recurrent",
                (false, false) => "; neither queue positive recurrent",
                _ => "; the queues disagree",
            });
            if !e.en_s1.hi.is_finite() {
                text.push_str("; E N(s₁) = ∞");
            }
            text
        }
        (Ok(e), None) => format!(
            "GI/GI/∞ verdict inconclusive; GI/GI/1 waiting time: {}",
            describe(e.single_server_positive_recurrent)
        ),
        (Err(msg), _) => format!(
            "GI/GI/∞ verdict {:?}; single-server analysis unavailable: {msg}",
            infinite_server.verdict
        ),
    };
    QueueComparison {
        infinite_server,
        single_server,
        commentary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec as D;

    fn quick() -> ClassifierConfig {
        ClassifierConfig {
            n_max: 100_000,
            tail_reps: 100,
            series_reps: 200,
            ..Default::default()
        }
    }

    #[test]
    fn analytic_examples() {
        let det = || D::deterministic(1.0).unwrap();
        let v = |t, s| analytic_phase(&ModelSpec::new(t, s)).unwrap().verdict;
        assert_eq!(v(det(), D::pareto(0.5, 1.0).unwrap()), Verdict::Transient);
        assert_eq!(
            v(det(), D::truncated_pareto_one(1.0, 1.0).unwrap()),
            Verdict::NullRecurrent
        );
        assert_eq!(
            v(D::exponential(1.0).unwrap(), D::exponential(1.0).unwrap()),
            Verdict::PositiveRecurrent
        );
    }

    #[test]
    fn classify_examples() {
        let mut s = RngStream::from_seed(0);
        let exp = ModelSpec::new(D::exponential(1.0).unwrap(), D::exponential(1.0).unwrap());
        let r = classify(&exp, &quick(), &mut s);
        assert_eq!(r.verdict, Verdict::PositiveRecurrent);
        assert_eq!(r.source, Source::Both);

        let t = ModelSpec::new(
            D::deterministic(1.0).unwrap(),
            D::truncated_pareto_one(2.0, 2.0).unwrap(),
        );
        let r = classify(&t, &quick(), &mut s);
        assert_eq!(r.verdict, Verdict::Transient);
        assert_eq!(r.source, Source::Both);
    }

    #[test]
    fn monte_carlo_only_model() {
        // Pareto service α=0.7 against Exp arrivals: T_n linear, Σ n^{-0.7} diverges
        let m = ModelSpec::new(D::exponential(1.0).unwrap(), D::pareto(0.7, 1.0).unwrap());
        assert!(analytic_phase(&m).is_none());
        let r = classify(&m, &quick(), &mut RngStream::from_seed(1));
        assert_eq!(r.source, Source::MonteCarlo);
        assert_eq!(r.verdict, Verdict::Transient);
    }

    #[test]
    fn weighing_rules() {
        use SeriesVerdict::*;
        assert_eq!(weigh(Converges, None, None).verdict, Verdict::PositiveRecurrent);
        assert_eq!(
            weigh(Diverges, Some(Converges), Some(Converges)).verdict,
            Verdict::Transient
        );
        assert_eq!(
            weigh(Diverges, Some(Diverges), Some(Diverges)).verdict,
            Verdict::NullRecurrent
        );
        assert_eq!(
            weigh(Diverges, Some(Diverges), Some(Converges)).verdict,
            Verdict::Inconclusive
        );
        assert!(weigh(Diverges, Some(Converges), Some(Diverges)).conflict);
        assert!(weigh(Converges, Some(Converges), Some(Converges)).conflict);
    }

    #[test]
    fn comparison_det_tpo() {
        let m = ModelSpec::new(
            D::deterministic(1.0).unwrap(),
            D::truncated_pareto_one(0.5, 0.5).unwrap(),
        );
        let c = compare_queues(&m, &quick(), &mut RngStream::from_seed(0));
        assert_eq!(c.infinite_server.verdict, Verdict::NullRecurrent);
        assert!(c.commentary.contains("E N(s₁) = ∞"), "{}", c.commentary);
    }
}
