//! Central finite-difference verification of analytic gradients.
//!
//! Every differentiable op and layer is checked against a two-sided
//! difference quotient with step 1e-6. The comparison is relative with
//! a small denominator floor so near-zero gradients are judged on
//! absolute agreement.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;

use crate::math;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const OPS_TOLERANCE: f64 = 1e-5;
pub const LAYERS_TOLERANCE: f64 = 1e-4;

/// One compared gradient entry; only the worst offenders are kept.
#[derive(Clone, Debug, Serialize)]
pub struct GradMismatch {
    pub case: String,
    pub param: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub scope: String,
    pub tolerance: f64,
    pub cases: usize,
    pub entries_checked: usize,
    pub max_rel_err: f64,
    pub passed: bool,
    /// Worst offenders, largest relative error first (up to 10).
    pub worst: Vec<GradMismatch>,
}

impl GradCheckReport {
    fn new(scope: &str, tolerance: f64) -> Self {
        GradCheckReport {
            scope: String::from(scope),
            tolerance,
            cases: 0,
            entries_checked: 0,
            max_rel_err: 0.0,
            passed: true,
            worst: Vec::new(),
        }
    }

    fn record(&mut self, m: GradMismatch) {
        self.max_rel_err = self.max_rel_err.max(m.rel_err);
        if m.rel_err > self.tolerance {
            self.passed = false;
        }
        self.worst.push(m);
        self.worst
            .sort_by(|a, b| b.rel_err.partial_cmp(&a.rel_err).unwrap());
        self.worst.truncate(10);
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = math::abs(analytic).max(math::abs(numeric)).max(1e-3);
    math::abs(analytic - numeric) / denom
}

/// Checks one differentiable program: `build` assembles a scalar loss
/// from parameter leaves. Analytic gradients from `backward` are
/// compared with central differences per parameter entry.
pub fn check_case<F>(report: &mut GradCheckReport, name: &str, params: &[Tensor], build: F)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    check_case_with_fault(report, name, params, build, false);
}

/// As `check_case`, optionally corrupting one analytic gradient entry,
/// so the harness itself can be shown to catch wrong gradients.
pub fn check_case_with_fault<F>(
    report: &mut GradCheckReport,
    name: &str,
    params: &[Tensor],
    build: F,
    inject_fault: bool,
) where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    report.cases += 1;
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.param(p)).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("loss must be scalar");
    let mut analytic: Vec<Tensor> = ids
        .iter()
        .zip(params)
        .map(|(&id, p)| {
            tape.grad_tensor(id)
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();
    if inject_fault {
        if let Some(first) = analytic.get_mut(0) {
            if !first.is_empty() {
                let v = first.values_mut();
                v[0] = v[0] * 2.0 + 1.0;
            }
        }
    }

    let eval = |ps: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| t.param(p)).collect();
        let loss = build(&mut t, &ids);
        t.scalar(loss)
    };
    let h = DEFAULT_STEP;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for entry in 0..p.len() {
            let orig = p.values()[entry];
            work[pi].values_mut()[entry] = orig + h;
            let up = eval(&work);
            work[pi].values_mut()[entry] = orig - h;
            let down = eval(&work);
            work[pi].values_mut()[entry] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].values()[entry];
            report.entries_checked += 1;
            report.record(GradMismatch {
                case: String::from(name),
                param: pi,
                entry,
                analytic: a,
                numeric,
                rel_err: rel_err(a, numeric),
            });
        }
    }
}

fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.symmetric(1.0)).collect();
    Tensor::from_vec(rows, cols, values)
}

/// Random tensor with entries kept away from zero so kinked
/// activations are not straddled by the difference step.
fn random_tensor_off_kink(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let v = rng.symmetric(1.0);
            if math::abs(v) < 1e-3 {
                v + if v >= 0.0 { 1e-3 } else { -1e-3 }
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, values)
}

/// Weighted sum of all output entries, so multi-output ops reduce to a
/// scalar with generic (fixed) weights.
fn weighted_loss(tape: &mut Tape, out: NodeId, seed: u64) -> NodeId {
    let (r, c) = tape.shape(out);
    let mut rng = Rng::from_seed(seed ^ 0x5745_4947_4854_5321);
    let w = random_tensor(c, 1, &mut rng);
    let wid = tape.constant(&w);
    let col = tape.matmul(out, wid).unwrap();
    let rw = random_tensor(1, r, &mut rng);
    let rid = tape.constant(&rw);
    tape.matmul(rid, col).unwrap()
}

/// Finite-difference suite over every autodiff op.
pub fn check_ops(cases_per_op: usize, seed: u64) -> GradCheckReport {
    check_ops_impl(cases_per_op, seed, false)
}

/// Harness sanity fixture: runs the ops suite with one deliberately
/// corrupted analytic gradient; the report must come back failed.
pub fn check_ops_with_injected_fault(seed: u64) -> GradCheckReport {
    check_ops_impl(1, seed, true)
}

fn check_ops_impl(cases_per_op: usize, seed: u64, inject_fault: bool) -> GradCheckReport {
    let mut report = GradCheckReport::new("ops", OPS_TOLERANCE);
    let mut rng = Rng::from_seed(seed);
    for case in 0..cases_per_op {
        let r = 2 + rng.below(4);
        let k = 1 + rng.below(4);
        let c = 1 + rng.below(4);
        let wseed = rng.next_u64();
        let fault = inject_fault && case == 0;

        let a = random_tensor(r, k, &mut rng);
        let b = random_tensor(k, c, &mut rng);
        check_case_with_fault(
            &mut report,
            &format!("matmul[{case}]"),
            &[a.clone(), b.clone()],
            |t, ids| {
                let m = t.matmul(ids[0], ids[1]).unwrap();
                weighted_loss(t, m, wseed)
            },
            fault,
        );

        let a2 = random_tensor(r, c, &mut rng);
        let b2 = random_tensor(r, c, &mut rng);
        check_case(&mut report, &format!("add[{case}]"), &[a2, b2], |t, ids| {
            let m = t.add(ids[0], ids[1]).unwrap();
            weighted_loss(t, m, wseed)
        });

        let a3 = random_tensor(r, k, &mut rng);
        let b3 = random_tensor(r, c, &mut rng);
        check_case(
            &mut report,
            &format!("concat_cols[{case}]"),
            &[a3, b3],
            |t, ids| {
                let m = t.concat_cols(ids[0], ids[1]).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a4 = random_tensor(r + 2, c, &mut rng);
        let start = rng.below(2);
        check_case(
            &mut report,
            &format!("slice_rows[{case}]"),
            &[a4],
            |t, ids| {
                let m = t.slice_rows(ids[0], start, r).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a5 = random_tensor(r, c, &mut rng);
        let index: Rc<[usize]> = Rc::from(
            (0..r + 3).map(|_| rng.below(r)).collect::<Vec<_>>(),
        );
        check_case(
            &mut report,
            &format!("gather_rows[{case}]"),
            &[a5],
            |t, ids| {
                let m = t.gather_rows(ids[0], index.clone()).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let m_rows = 3 + rng.below(5);
        let s_count = 1 + rng.below(4);
        let a6 = random_tensor(m_rows, c, &mut rng);
        let segs: Rc<[usize]> = Rc::from(
            (0..m_rows).map(|_| rng.below(s_count)).collect::<Vec<_>>(),
        );
        check_case(
            &mut report,
            &format!("segment_sum[{case}]"),
            &[a6],
            |t, ids| {
                let m = t.segment_sum(ids[0], segs.clone(), s_count).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a7 = random_tensor(m_rows, 1, &mut rng);
        let segs7: Rc<[usize]> = Rc::from(
            (0..m_rows).map(|_| rng.below(s_count)).collect::<Vec<_>>(),
        );
        check_case(
            &mut report,
            &format!("segment_softmax[{case}]"),
            &[a7],
            |t, ids| {
                let m = t.segment_softmax(ids[0], segs7.clone(), s_count).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a8 = random_tensor(r, c, &mut rng);
        let s8 = random_tensor(r, 1, &mut rng);
        check_case(
            &mut report,
            &format!("mul_rows[{case}]"),
            &[a8, s8],
            |t, ids| {
                let m = t.mul_rows(ids[0], ids[1]).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a9 = random_tensor_off_kink(r, c, &mut rng);
        check_case(
            &mut report,
            &format!("leaky_relu[{case}]"),
            &[a9.clone()],
            |t, ids| {
                let m = t.leaky_relu(ids[0], 0.2);
                weighted_loss(t, m, wseed)
            },
        );
        check_case(&mut report, &format!("relu[{case}]"), &[a9.clone()], |t, ids| {
            let m = t.relu(ids[0]);
            weighted_loss(t, m, wseed)
        });
        check_case(&mut report, &format!("elu[{case}]"), &[a9], |t, ids| {
            let m = t.elu(ids[0]);
            weighted_loss(t, m, wseed)
        });

        let a10 = random_tensor(r, c, &mut rng);
        let dropout_seed = rng.next_u64();
        check_case(
            &mut report,
            &format!("dropout[{case}]"),
            &[a10],
            |t, ids| {
                // Same seed per evaluation: the mask is fixed while
                // inputs are wiggled.
                let mut drng = Rng::from_seed(dropout_seed);
                let m = t.dropout(ids[0], 0.7, &mut drng, true);
                weighted_loss(t, m, wseed)
            },
        );

        let a11 = random_tensor(r, c, &mut rng);
        let bias = random_tensor(1, c, &mut rng);
        check_case(
            &mut report,
            &format!("add_row_bias[{case}]"),
            &[a11, bias],
            |t, ids| {
                let m = t.add_row_bias(ids[0], ids[1]).unwrap();
                weighted_loss(t, m, wseed)
            },
        );

        let a12 = random_tensor(r, 2 + rng.below(3), &mut rng);
        check_case(
            &mut report,
            &format!("row_softmax[{case}]"),
            &[a12],
            |t, ids| {
                let m = t.row_softmax(ids[0]);
                weighted_loss(t, m, wseed)
            },
        );

        let classes = 2 + rng.below(4);
        let logits = random_tensor(r, classes, &mut rng);
        let labels: Rc<[usize]> = Rc::from(
            (0..r).map(|_| rng.below(classes)).collect::<Vec<_>>(),
        );
        let mask_len = 1 + rng.below(r);
        let mask: Rc<[usize]> = Rc::from((0..mask_len).collect::<Vec<_>>());
        check_case(
            &mut report,
            &format!("masked_ce[{case}]"),
            &[logits],
            |t, ids| {
                t.masked_softmax_cross_entropy(ids[0], labels.clone(), mask.clone())
                    .unwrap()
            },
        );

        let a13 = random_tensor(r, c, &mut rng);
        check_case(&mut report, &format!("scale[{case}]"), &[a13], |t, ids| {
            let m = t.scale(ids[0], -1.7);
            weighted_loss(t, m, wseed)
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ops_pass_at_tolerance() {
        let report = check_ops(10, 12345);
        assert!(
            report.passed,
            "worst: {:?} (max rel {})",
            report.worst.first(),
            report.max_rel_err
        );
        assert!(report.max_rel_err < OPS_TOLERANCE);
    }

    #[test]
    fn injected_fault_is_caught() {
        let report = check_ops_with_injected_fault(999);
        assert!(!report.passed, "the corrupted gradient must be flagged");
    }

    #[test]
    fn elu_gradient_matches_central_differences() {
        let mut report = GradCheckReport::new("elu", 1e-6);
        let mut rng = Rng::from_seed(7);
        let x = random_tensor_off_kink(4, 4, &mut rng);
        let wseed = rng.next_u64();
        check_case(&mut report, "elu", &[x], |t, ids| {
            let m = t.elu(ids[0]);
            weighted_loss(t, m, wseed)
        });
        assert!(report.passed, "max rel {}", report.max_rel_err);
    }
}
