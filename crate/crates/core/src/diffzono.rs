//! Lock-step propagation of two reachability zonotopes and a differential
//! zonotope bounding `f1(x) − f2(x)`.
//!
//! The three zonotopes share noise symbols by (class, ordinal): `z1` owns
//! input and F1 generators, `z2` input and F2 generators, and `zdelta` all
//! four classes with its F1/F2 blocks kept exactly as wide as `z1`/`z2`.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::network::{Activation, Network};
use crate::zonotope::{classify, GeneratorClass, Interval, Phase, ReluRelaxation, Zonotope};

use GeneratorClass::{DiffApprox, F1Approx, F2Approx, Input};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Propagate the differential zonotope alongside both networks.
    Diff,
    /// Derive the difference as `z1 − z2` after propagating both networks.
    Naive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Diff => "diff",
            Mode::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffState {
    pub z1: Zonotope,
    pub z2: Zonotope,
    pub zdelta: Zonotope,
}

/// Which of the two networks a ReLU event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// Emitted once per network and ReLU layer, before the relaxation is applied.
#[derive(Debug)]
pub struct ReluEvent<'a> {
    pub side: Side,
    pub pre: &'a Zonotope,
    pub relaxations: &'a [ReluRelaxation],
}

/// Per-row parameters of the differential ReLU relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReluParams {
    pub lambda_d: f64,
    pub mu_d: f64,
    pub nu_d: f64,
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
}

impl DeltaReluParams {
    pub fn new(delta: Interval, pre1: Interval, pre2: Interval) -> Self {
        let (lambda1, mu1) = neg_side(pre1);
        let (lambda2, mu2) = neg_side(pre2);
        let (l, u) = (delta.lower, delta.upper);
        let width = u - l;
        let lambda_d = if width > 0.0 {
            (u / width).clamp(0.0, 1.0)
        } else if u > 0.0 {
            1.0
        } else {
            0.0
        };
        Self {
            lambda_d,
            mu_d: 0.5 * (-l).max(u),
            nu_d: lambda_d * (-l).max(0.0),
            lambda1,
            mu1,
            lambda2,
            mu2,
        }
    }
}

/// `λ = −l/(u−l)`, `μ = ½λu`: relaxation of `max(0, −x)` for an instable row.
fn neg_side(b: Interval) -> (f64, f64) {
    let width = b.upper - b.lower;
    if width > 0.0 {
        let lambda = -b.lower / width;
        (lambda, 0.5 * lambda * b.upper)
    } else {
        (0.0, 0.0)
    }
}

impl DiffState {
    /// Both reachability zonotopes start as the input zonotope, the difference at zero.
    pub fn init(z_in: &Zonotope) -> Result<Self> {
        for class in [F1Approx, F2Approx, DiffApprox] {
            if z_in.num_generators(class) != 0 {
                return Err(Error::input(
                    "z_in",
                    "input zonotope must only carry input generators",
                ));
            }
        }
        let m = z_in.dims();
        let mut zdelta = Zonotope::zeros(m);
        zdelta.pad_class(Input, z_in.num_generators(Input));
        Ok(Self {
            z1: z_in.clone(),
            z2: z_in.clone(),
            zdelta,
        })
    }

    pub fn dims(&self) -> usize {
        self.z1.dims()
    }

    pub fn affine_delta(
        &self,
        w1: &Array2<f64>,
        b1: &Array1<f64>,
        w2: &Array2<f64>,
        b2: &Array1<f64>,
    ) -> Result<DiffState> {
        if w1.dim() != w2.dim() {
            return Err(Error::IncompatibleArchitectures(format!(
                "weight shapes {:?} vs {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        if b1.len() != b2.len() {
            return Err(Error::dim("affine_delta bias", b1.len(), b2.len()));
        }
        let z1 = self.z1.affine_transform(w1, b1)?;
        let z2 = self.z2.affine_transform(w2, b2)?;
        let dw = w1 - w2;
        let d = self.zdelta.blocks();
        let p = self.z2.blocks();
        let e = w1.dot(&d[Input.index()]) + dw.dot(&p[Input.index()]);
        let a1 = w1.dot(&d[F1Approx.index()]);
        let a2 = w1.dot(&d[F2Approx.index()]) + dw.dot(&p[F2Approx.index()]);
        let ad = w1.dot(&d[DiffApprox.index()]);
        let c = w1.dot(self.zdelta.center()) + dw.dot(self.z2.center()) + (b1 - b2);
        let zdelta = Zonotope::from_raw(c, [e, a1, a2, ad]);
        Ok(DiffState { z1, z2, zdelta })
    }

    /// ReLU on both networks followed by the differential case split.
    pub fn relu_delta(&self) -> DiffState {
        self.relu_delta_observed(&mut |_| {})
    }

    fn relu_delta_observed(&self, observer: &mut dyn FnMut(&ReluEvent<'_>)) -> DiffState {
        let (hat1, rel1) = self.z1.relu_transform(F1Approx);
        let (hat2, rel2) = self.z2.relu_transform(F2Approx);
        observer(&ReluEvent {
            side: Side::First,
            pre: &self.z1,
            relaxations: &rel1,
        });
        observer(&ReluEvent {
            side: Side::Second,
            pre: &self.z2,
            relaxations: &rel2,
        });
        let zdelta = relu_delta(self, &hat1, &rel1, &hat2, &rel2);
        DiffState {
            z1: hat1,
            z2: hat2,
            zdelta,
        }
    }

    /// The differential form implied by `z1 − z2` alone.
    pub fn with_naive_delta(mut self) -> DiffState {
        self.zdelta = naive_delta(&self.z1, &self.z2);
        self
    }
}

/// `(E' − E'', A', −A'', ∅, c' − c'')`.
pub fn naive_delta(z1: &Zonotope, z2: &Zonotope) -> Zonotope {
    let b1 = z1.blocks();
    let b2 = z2.blocks();
    let m = z1.dims();
    Zonotope::from_raw(
        z1.center() - z2.center(),
        [
            &b1[Input.index()] - &b2[Input.index()],
            b1[F1Approx.index()].clone(),
            -&b2[F2Approx.index()],
            Array2::zeros((m, 0)),
        ],
    )
}

/// Builds the differential zonotope after a ReLU layer.
///
/// `pre` holds the pre-activation tuple; `hat1`/`hat2` and the relaxation
/// lists are the per-network ReLU results, whose phases drive the case split
/// so the three zonotopes never disagree on a row's case.
pub fn relu_delta(
    pre: &DiffState,
    hat1: &Zonotope,
    rel1: &[ReluRelaxation],
    hat2: &Zonotope,
    rel2: &[ReluRelaxation],
) -> Zonotope {
    let m = pre.dims();
    let n = pre.zdelta.num_generators(Input);
    let p1 = pre.z1.num_generators(F1Approx);
    let p2 = pre.z2.num_generators(F2Approx);
    let p4 = pre.zdelta.num_generators(DiffApprox);
    let p1_hat = hat1.num_generators(F1Approx);
    let p2_hat = hat2.num_generators(F2Approx);

    let d = pre.zdelta.blocks();
    let g1 = pre.z1.blocks();
    let g2 = pre.z2.blocks();
    let h1 = hat1.blocks();
    let h2 = hat2.blocks();
    let delta_bounds = pre.zdelta.all_bounds();

    let mut e = Array2::zeros((m, n));
    let mut a1 = Array2::zeros((m, p1_hat));
    let mut a2 = Array2::zeros((m, p2_hat));
    let mut ad = Array2::zeros((m, p4));
    let mut c = Array1::zeros(m);
    let mut fresh: Vec<(usize, f64)> = Vec::new();

    // Copies `scale · src` into the first `src.len()` entries of `dst` row `r`.
    fn put(dst: &mut Array2<f64>, r: usize, src: ArrayView1<'_, f64>, scale: f64) {
        dst.slice_mut(s![r, ..src.len()])
            .zip_mut_with(&src, |o, &v| *o = scale * v);
    }
    // Adds `scale · src` to the prefix of `dst` row `r`.
    fn add(dst: &mut Array2<f64>, r: usize, src: ArrayView1<'_, f64>, scale: f64) {
        dst.slice_mut(s![r, ..src.len()])
            .zip_mut_with(&src, |o, &v| *o += scale * v);
    }
    let copy_delta = |e: &mut Array2<f64>,
                      a1: &mut Array2<f64>,
                      a2: &mut Array2<f64>,
                      ad: &mut Array2<f64>,
                      r: usize,
                      scale: f64| {
        put(e, r, d[Input.index()].row(r), scale);
        put(a1, r, d[F1Approx.index()].row(r), scale);
        put(a2, r, d[F2Approx.index()].row(r), scale);
        put(ad, r, d[DiffApprox.index()].row(r), scale);
    };

    for r in 0..m {
        let cd = pre.zdelta.center()[r];
        match (rel1[r].phase, rel2[r].phase) {
            (Phase::Neg, Phase::Neg) => {}
            (Phase::Neg, Phase::Pos) => {
                put(&mut e, r, g2[Input.index()].row(r), -1.0);
                put(&mut a2, r, g2[F2Approx.index()].row(r), -1.0);
                c[r] = -pre.z2.center()[r];
            }
            (Phase::Pos, Phase::Neg) => {
                put(&mut e, r, g1[Input.index()].row(r), 1.0);
                put(&mut a1, r, g1[F1Approx.index()].row(r), 1.0);
                c[r] = pre.z1.center()[r];
            }
            (Phase::Pos, Phase::Pos) => {
                copy_delta(&mut e, &mut a1, &mut a2, &mut ad, r, 1.0);
                c[r] = cd;
            }
            (Phase::Instable, Phase::Neg) => {
                put(&mut e, r, h1[Input.index()].row(r), 1.0);
                put(&mut a1, r, h1[F1Approx.index()].row(r), 1.0);
                c[r] = hat1.center()[r];
            }
            (Phase::Neg, Phase::Instable) => {
                put(&mut e, r, h2[Input.index()].row(r), -1.0);
                put(&mut a2, r, h2[F2Approx.index()].row(r), -1.0);
                c[r] = -hat2.center()[r];
            }
            (Phase::Instable, Phase::Pos) => {
                let params = DeltaReluParams::new(delta_bounds[r], rel1[r].bounds, rel2[r].bounds);
                let (lam, mu) = (params.lambda1, params.mu1);
                copy_delta(&mut e, &mut a1, &mut a2, &mut ad, r, 1.0);
                add(&mut e, r, g1[Input.index()].row(r), -lam);
                add(&mut a1, r, g1[F1Approx.index()].row(r), -lam);
                c[r] = cd - lam * pre.z1.center()[r] + mu;
                if mu != 0.0 {
                    fresh.push((r, mu));
                }
            }
            (Phase::Pos, Phase::Instable) => {
                let params = DeltaReluParams::new(delta_bounds[r], rel1[r].bounds, rel2[r].bounds);
                let (lam, mu) = (params.lambda2, params.mu2);
                copy_delta(&mut e, &mut a1, &mut a2, &mut ad, r, 1.0);
                add(&mut e, r, g2[Input.index()].row(r), lam);
                add(&mut a2, r, g2[F2Approx.index()].row(r), lam);
                c[r] = cd + lam * pre.z2.center()[r] - mu;
                if mu != 0.0 {
                    fresh.push((r, mu));
                }
            }
            (Phase::Instable, Phase::Instable) => {
                let bd = delta_bounds[r];
                if bd.lower == 0.0 && bd.upper == 0.0 {
                    // x − y ≡ 0 on this row, hence ReLU(x) − ReLU(y) ≡ 0.
                    continue;
                }
                let params = DeltaReluParams::new(bd, rel1[r].bounds, rel2[r].bounds);
                copy_delta(&mut e, &mut a1, &mut a2, &mut ad, r, params.lambda_d);
                c[r] = params.lambda_d * cd + params.nu_d - params.mu_d;
                if params.mu_d != 0.0 {
                    fresh.push((r, params.mu_d));
                }
            }
        }
    }
    debug_assert_eq!(p1, g1[F1Approx.index()].ncols());
    debug_assert_eq!(p2, g2[F2Approx.index()].ncols());
    let mut zdelta = Zonotope::from_raw(c, [e, a1, a2, ad]);
    zdelta.append_generators(DiffApprox, &fresh);
    zdelta
}

/// Phase pair of each row, as used by the differential case split.
pub fn phase_pairs(state: &DiffState) -> Vec<(Phase, Phase)> {
    state
        .z1
        .all_bounds()
        .into_iter()
        .zip(state.z2.all_bounds())
        .map(|(a, b)| (classify(a), classify(b)))
        .collect()
}

fn check_lockstep(net1: &Network, net2: &Network, z_in: &Zonotope) -> Result<()> {
    if net1.depth() != net2.depth() {
        return Err(Error::IncompatibleArchitectures(format!(
            "depth {} vs {}",
            net1.depth(),
            net2.depth()
        )));
    }
    for (i, (a, b)) in net1.layers().iter().zip(net2.layers()).enumerate() {
        if a.weights.dim() != b.weights.dim() || a.activation != b.activation {
            return Err(Error::IncompatibleArchitectures(format!(
                "layer {i} differs in shape or activation; pad networks first"
            )));
        }
    }
    if z_in.dims() != net1.input_dim() {
        return Err(Error::dim("input zonotope", net1.input_dim(), z_in.dims()));
    }
    Ok(())
}

pub fn reach_delta(net1: &Network, net2: &Network, z_in: &Zonotope, mode: Mode) -> Result<DiffState> {
    reach_delta_observed(net1, net2, z_in, mode, &mut |_| {})
}

/// [`reach_delta`] that reports every ReLU layer's pre-activation zonotopes.
pub fn reach_delta_observed(
    net1: &Network,
    net2: &Network,
    z_in: &Zonotope,
    mode: Mode,
    observer: &mut dyn FnMut(&ReluEvent<'_>),
) -> Result<DiffState> {
    check_lockstep(net1, net2, z_in)?;
    let mut state = DiffState::init(z_in)?;
    for (l1, l2) in net1.layers().iter().zip(net2.layers()) {
        state = match mode {
            Mode::Diff => state.affine_delta(&l1.weights, &l1.bias, &l2.weights, &l2.bias)?,
            Mode::Naive => DiffState {
                z1: state.z1.affine_transform(&l1.weights, &l1.bias)?,
                z2: state.z2.affine_transform(&l2.weights, &l2.bias)?,
                zdelta: state.zdelta,
            },
        };
        if l1.activation == Activation::Relu {
            state = match mode {
                Mode::Diff => state.relu_delta_observed(observer),
                Mode::Naive => {
                    let (hat1, rel1) = state.z1.relu_transform(F1Approx);
                    let (hat2, rel2) = state.z2.relu_transform(F2Approx);
                    observer(&ReluEvent {
                        side: Side::First,
                        pre: &state.z1,
                        relaxations: &rel1,
                    });
                    observer(&ReluEvent {
                        side: Side::Second,
                        pre: &state.z2,
                        relaxations: &rel2,
                    });
                    DiffState {
                        z1: hat1,
                        z2: hat2,
                        zdelta: state.zdelta,
                    }
                }
            };
        }
    }
    Ok(match mode {
        Mode::Diff => state,
        Mode::Naive => state.with_naive_delta(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use crate::zonotope::box_to_zonotope;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_dim_state(e1: f64, c1: f64, e2: f64, c2: f64, ed: f64, cd: f64) -> DiffState {
        let z = |e: f64, c: f64| Zonotope::with_input_generators(array![c], array![[e]]).unwrap();
        DiffState {
            z1: z(e1, c1),
            z2: z(e2, c2),
            zdelta: z(ed, cd),
        }
    }

    #[test]
    fn init_has_zero_difference() {
        let z_in = box_to_zonotope(&[-1.0, 0.0], &[1.0, 3.0]).unwrap();
        let s = DiffState::init(&z_in).unwrap();
        assert!(s.zdelta.all_bounds().iter().all(|b| b.lower == 0.0 && b.upper == 0.0));
        assert_eq!(s.zdelta.center().to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.z1, s.z2);
    }

    #[test]
    fn affine_delta_identical_layers_keep_zero() {
        let z_in = box_to_zonotope(&[-1.0, 0.0], &[1.0, 3.0]).unwrap();
        let s = DiffState::init(&z_in).unwrap();
        let w = array![[1.0, -2.0], [0.5, 3.0]];
        let b = array![0.1, -0.2];
        let t = s.affine_delta(&w, &b, &w, &b).unwrap();
        assert!(t.zdelta.generator_matrix().iter().all(|&g| g == 0.0));
        assert!(t.zdelta.center().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn affine_delta_scales_difference() {
        // f1 = 2x, f2 = x on x ∈ [-1, 1]: difference is x.
        let s = one_dim_state(1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let t = s
            .affine_delta(&array![[2.0]], &array![0.0], &array![[1.0]], &array![0.0])
            .unwrap();
        assert_eq!(t.zdelta.block(Input).to_owned(), array![[1.0]]);
        assert_eq!(t.zdelta.center()[0], 0.0);
    }

    #[test]
    fn neg_pos_row_negates_second_network() {
        // z1 row always negative, z2 row (0.2 ε + 1) always positive.
        let s = one_dim_state(0.1, -1.0, 0.2, 1.0, -0.1, -2.0);
        let out = s.relu_delta();
        assert_eq!(out.zdelta.block(Input).to_owned(), array![[-0.2]]);
        assert_eq!(out.zdelta.center()[0], -1.0);
    }

    #[test]
    fn both_instable_row_uses_clamped_interpolation() {
        // zdelta bounds [-1, 1], cΔ = 0 → λΔ = 0.5, μΔ = 0.5, νΔ = 0.5.
        let s = one_dim_state(1.0, 0.0, 2.0, 0.5, 1.0, 0.0);
        let out = s.relu_delta();
        assert_eq!(out.zdelta.block(Input).to_owned(), array![[0.5]]);
        assert_eq!(out.zdelta.num_generators(DiffApprox), 1);
        assert_eq!(out.zdelta.block(DiffApprox)[[0, 0]], 0.5);
        assert_eq!(out.zdelta.center()[0], 0.0);
        let p = DeltaReluParams::new(Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0));
        assert_eq!((p.lambda_d, p.mu_d, p.nu_d), (0.5, 0.5, 0.5));
    }

    #[test]
    fn relu_delta_pads_blocks_to_hat_widths() {
        let s = one_dim_state(1.0, 0.0, 1.0, 0.5, -0.0, -0.5);
        let out = s.relu_delta();
        assert_eq!(out.zdelta.num_generators(F1Approx), out.z1.num_generators(F1Approx));
        assert_eq!(out.zdelta.num_generators(F2Approx), out.z2.num_generators(F2Approx));
    }

    /// Samples (x, y) jointly contained in the tuple by drawing ε for every
    /// class, then checks that ReLU(x), ReLU(y) and their difference land
    /// inside the transformed tuple's intervals at the same input fixing.
    #[test]
    fn relu_delta_preserves_joint_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let e1: f64 = rng.random_range(-2.0..2.0);
            let c1: f64 = rng.random_range(-1.5..1.5);
            let ed: f64 = rng.random_range(-0.5..0.5);
            let cd: f64 = rng.random_range(-0.5..0.5);
            // y = x − (x − y): build z2 consistent with z1 − zdelta.
            let s = one_dim_state(e1, c1, e1 - ed, c1 - cd, ed, cd);
            let out = s.relu_delta();
            for _ in 0..50 {
                let v: f64 = rng.random_range(-1.0..=1.0);
                let x = e1 * v + c1;
                let y = (e1 - ed) * v + (c1 - cd);
                let fixed = |z: &Zonotope| z.fix_input_generators(&[v]).unwrap().bounds(0).unwrap();
                let diff = x.max(0.0) - y.max(0.0);
                assert!(fixed(&out.z1).contains(x.max(0.0), 1e-9));
                assert!(fixed(&out.z2).contains(y.max(0.0), 1e-9));
                assert!(fixed(&out.zdelta).contains(diff, 1e-9), "diff {diff} outside");
            }
        }
    }

    #[test]
    fn identical_networks_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::random("n", 3, &[8, 8], 2, &mut rng);
        let z_in = box_to_zonotope(&[-1.0; 3], &[1.0; 3]).unwrap();
        let s = reach_delta(&net, &net, &z_in, Mode::Diff).unwrap();
        assert!(s.zdelta.generator_matrix().iter().all(|&g| g == 0.0));
        assert!(s.zdelta.center().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn linear_networks_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lin = |rng: &mut ChaCha8Rng| {
            let w: Array2<f64> = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
            let b: Array1<f64> = Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));
            Network::new("lin", 2, vec![Layer::new(w, b, Activation::Linear).unwrap()]).unwrap()
        };
        let (a, b) = (lin(&mut rng), lin(&mut rng));
        let z_in = box_to_zonotope(&[-1.0, 0.0], &[1.0, 2.0]).unwrap();
        let diff = reach_delta(&a, &b, &z_in, Mode::Diff).unwrap();
        let naive = reach_delta(&a, &b, &z_in, Mode::Naive).unwrap();
        for (x, y) in diff.zdelta.all_bounds().iter().zip(naive.zdelta.all_bounds()) {
            assert!((x.lower - y.lower).abs() < 1e-12 && (x.upper - y.upper).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unpadded_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Network::random("a", 2, &[3], 1, &mut rng);
        let b = Network::random("b", 2, &[4], 1, &mut rng);
        let z_in = box_to_zonotope(&[0.0; 2], &[1.0; 2]).unwrap();
        assert!(reach_delta(&a, &b, &z_in, Mode::Diff).is_err());
    }

    #[test]
    fn diff_generators_counted_per_approximated_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net1 = Network::random("a", 2, &[6, 6], 2, &mut rng);
        let net2 = net1.prune_by_weight_norm(0.25).unwrap();
        let z_in = box_to_zonotope(&[-1.0; 2], &[1.0; 2]).unwrap();
        let mut expected = 0;
        let mut state = DiffState::init(&z_in).unwrap();
        for (l1, l2) in net1.layers().iter().zip(net2.layers()) {
            state = state.affine_delta(&l1.weights, &l1.bias, &l2.weights, &l2.bias).unwrap();
            if l1.activation == Activation::Relu {
                let bounds = state.zdelta.all_bounds();
                for (r, (p1, p2)) in phase_pairs(&state).into_iter().enumerate() {
                    let params = DeltaReluParams::new(
                        bounds[r],
                        state.z1.bounds(r).unwrap(),
                        state.z2.bounds(r).unwrap(),
                    );
                    let mag = match (p1, p2) {
                        (Phase::Instable, Phase::Pos) => params.mu1,
                        (Phase::Pos, Phase::Instable) => params.mu2,
                        (Phase::Instable, Phase::Instable) => params.mu_d,
                        _ => 0.0,
                    };
                    if mag != 0.0 {
                        expected += 1;
                    }
                }
                state = state.relu_delta();
            }
        }
        assert_eq!(state.zdelta.num_generators(DiffApprox), expected);
        let via_reach = reach_delta(&net1, &net2, &z_in, Mode::Diff).unwrap();
        assert_eq!(via_reach, state);
    }
}
