//! Zonotopes over a tagged generator registry.
//!
//! Generators are grouped into four classes stored as dense column blocks in
//! a fixed order: input generators first, then the relaxation generators of
//! the first network, of the second network, and of the difference. Two
//! zonotopes refer to the same noise symbol when class and ordinal (column
//! index inside the block) coincide, which is what lets the per-network and
//! differential zonotopes share their ε values.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeneratorClass {
    Input,
    F1Approx,
    F2Approx,
    DiffApprox,
}

impl GeneratorClass {
    pub const ALL: [GeneratorClass; 4] = [
        GeneratorClass::Input,
        GeneratorClass::F1Approx,
        GeneratorClass::F2Approx,
        GeneratorClass::DiffApprox,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneratorId {
    pub class: GeneratorClass,
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper || lower.is_nan() || upper.is_nan());
        Self { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }

    pub fn abs_max(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Neg,
    Pos,
    Instable,
}

/// How one row was relaxed by [`Zonotope::relu_transform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    pub phase: Phase,
    pub lambda: f64,
    /// |½·λ·l|; zero for stable rows and for instable rows touching zero.
    pub new_generator_magnitude: f64,
    pub center_shift: f64,
    /// Bounds of the row before the transformation.
    pub bounds: Interval,
}

impl ReluRelaxation {
    pub fn appends_generator(&self) -> bool {
        self.new_generator_magnitude != 0.0
    }
}

pub fn classify(bounds: Interval) -> Phase {
    if bounds.upper < 0.0 {
        Phase::Neg
    } else if bounds.lower > 0.0 {
        Phase::Pos
    } else {
        Phase::Instable
    }
}

/// Values for every noise symbol, one vector per generator class.
///
/// Vectors may be longer than a zonotope's blocks; only the common prefix is
/// read, which is how one assignment serves the whole aligned tuple.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Noise(pub [Vec<f64>; 4]);

impl Noise {
    pub fn class(&self, class: GeneratorClass) -> &[f64] {
        &self.0[class.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: Array1<f64>,
    blocks: [Array2<f64>; 4],
}

impl Zonotope {
    /// Zonotope with only a center and no generators.
    pub fn point(center: Array1<f64>) -> Self {
        let m = center.len();
        Self {
            center,
            blocks: std::array::from_fn(|_| Array2::zeros((m, 0))),
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self::point(Array1::zeros(m))
    }

    pub fn from_blocks(center: Array1<f64>, blocks: [Array2<f64>; 4]) -> Result<Self> {
        for b in &blocks {
            if b.nrows() != center.len() {
                return Err(Error::dim("generator block rows", center.len(), b.nrows()));
            }
        }
        Ok(Self { center, blocks })
    }

    /// Zonotope whose generators are all input generators.
    pub fn with_input_generators(center: Array1<f64>, generators: Array2<f64>) -> Result<Self> {
        let m = center.len();
        Self::from_blocks(
            center,
            [
                generators,
                Array2::zeros((m, 0)),
                Array2::zeros((m, 0)),
                Array2::zeros((m, 0)),
            ],
        )
    }

    pub fn dims(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn block(&self, class: GeneratorClass) -> ArrayView2<'_, f64> {
        self.blocks[class.index()].view()
    }

    pub(crate) fn blocks(&self) -> &[Array2<f64>; 4] {
        &self.blocks
    }

    pub fn num_generators(&self, class: GeneratorClass) -> usize {
        self.blocks[class.index()].ncols()
    }

    pub fn total_generators(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }

    pub fn column(&self, id: GeneratorId) -> Option<ArrayView1<'_, f64>> {
        let b = &self.blocks[id.class.index()];
        (id.ordinal < b.ncols()).then(|| b.column(id.ordinal))
    }

    /// Every generator id in class order, then ordinal.
    pub fn generator_ids(&self) -> impl Iterator<Item = GeneratorId> + '_ {
        GeneratorClass::ALL.into_iter().flat_map(move |class| {
            (0..self.num_generators(class)).map(move |ordinal| GeneratorId { class, ordinal })
        })
    }

    /// The generator matrix with blocks side by side in class order.
    pub fn generator_matrix(&self) -> Array2<f64> {
        let views: Vec<_> = self.blocks.iter().map(|b| b.view()).collect();
        concatenate(Axis(1), &views).expect("blocks share row count")
    }

    fn row_radius(&self, row: usize) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.row(row).iter().map(|g| g.abs()).sum::<f64>())
            .sum()
    }

    pub fn bounds(&self, row: usize) -> Result<Interval> {
        if row >= self.dims() {
            return Err(Error::IndexOutOfRange {
                context: "zonotope row".into(),
                index: row,
                len: self.dims(),
            });
        }
        let r = self.row_radius(row);
        let c = self.center[row];
        Ok(Interval::new(c - r, c + r))
    }

    pub fn all_bounds(&self) -> Vec<Interval> {
        (0..self.dims())
            .map(|row| {
                let r = self.row_radius(row);
                Interval::new(self.center[row] - r, self.center[row] + r)
            })
            .collect()
    }

    /// Concrete point for a full noise assignment.
    pub fn evaluate(&self, noise: &Noise) -> Result<Array1<f64>> {
        let mut out = self.center.clone();
        for class in GeneratorClass::ALL {
            let block = &self.blocks[class.index()];
            let eps = noise.class(class);
            if eps.len() < block.ncols() {
                return Err(Error::dim(
                    format!("noise for {class:?}"),
                    block.ncols(),
                    eps.len(),
                ));
            }
            let eps = ArrayView1::from(&eps[..block.ncols()]);
            out += &block.dot(&eps);
        }
        Ok(out)
    }

    /// Fixes the first `v.len()` input generators to `v`, folding their
    /// contribution into the center and dropping their columns.
    pub fn fix_input_generators(&self, v: &[f64]) -> Result<Zonotope> {
        let inputs = &self.blocks[GeneratorClass::Input.index()];
        if v.len() > inputs.ncols() {
            return Err(Error::input(
                "v",
                format!(
                    "{} values for {} input generators",
                    v.len(),
                    inputs.ncols()
                ),
            ));
        }
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(x.abs() <= 1.0)) {
            return Err(Error::input(format!("v[{i}]"), format!("{x} lies outside [-1, 1]")));
        }
        let d = v.len();
        let fixed = inputs.slice(s![.., ..d]);
        let center = &self.center + &fixed.dot(&ArrayView1::from(v));
        let mut blocks = self.blocks.clone();
        blocks[GeneratorClass::Input.index()] = inputs.slice(s![.., d..]).to_owned();
        Ok(Zonotope { center, blocks })
    }

    /// Exact image under `W·x + b`.
    pub fn affine_transform(&self, w: &Array2<f64>, b: &Array1<f64>) -> Result<Zonotope> {
        if w.ncols() != self.dims() {
            return Err(Error::dim("affine transform columns", self.dims(), w.ncols()));
        }
        if b.len() != w.nrows() {
            return Err(Error::dim("affine transform bias", w.nrows(), b.len()));
        }
        Ok(Zonotope {
            center: w.dot(&self.center) + b,
            blocks: std::array::from_fn(|i| w.dot(&self.blocks[i])),
        })
    }

    /// Sound ReLU relaxation. Instable rows are scaled by `λ = u/(u−l)`,
    /// shifted by `−½λl` and receive one fresh generator of `class`.
    pub fn relu_transform(&self, class: GeneratorClass) -> (Zonotope, Vec<ReluRelaxation>) {
        let m = self.dims();
        let mut relaxations = Vec::with_capacity(m);
        let mut out = self.clone();
        for row in 0..m {
            let bounds = self.bounds(row).expect("row in range");
            let relax = match classify(bounds) {
                Phase::Neg => ReluRelaxation {
                    phase: Phase::Neg,
                    lambda: 0.0,
                    new_generator_magnitude: 0.0,
                    center_shift: 0.0,
                    bounds,
                },
                Phase::Pos => ReluRelaxation {
                    phase: Phase::Pos,
                    lambda: 1.0,
                    new_generator_magnitude: 0.0,
                    center_shift: 0.0,
                    bounds,
                },
                Phase::Instable => {
                    let width = bounds.upper - bounds.lower;
                    // u = l = 0: the row is the constant zero.
                    let lambda = if width > 0.0 { bounds.upper / width } else { 0.0 };
                    let half = -0.5 * lambda * bounds.lower;
                    ReluRelaxation {
                        phase: Phase::Instable,
                        lambda,
                        new_generator_magnitude: half.abs(),
                        center_shift: half,
                        bounds,
                    }
                }
            };
            match relax.phase {
                Phase::Neg => {
                    out.center[row] = 0.0;
                    for b in out.blocks.iter_mut() {
                        b.row_mut(row).fill(0.0);
                    }
                }
                Phase::Pos => {}
                Phase::Instable => {
                    out.center[row] = relax.lambda * self.center[row] + relax.center_shift;
                    for b in out.blocks.iter_mut() {
                        b.row_mut(row).mapv_inplace(|g| g * relax.lambda);
                    }
                }
            }
            relaxations.push(relax);
        }
        let fresh: Vec<(usize, f64)> = relaxations
            .iter()
            .enumerate()
            .filter(|(_, r)| r.appends_generator())
            .map(|(row, r)| (row, r.new_generator_magnitude))
            .collect();
        out.append_generators(class, &fresh);
        (out, relaxations)
    }

    /// Appends one column per `(row, magnitude)` to `class`, nonzero only in `row`.
    pub(crate) fn append_generators(&mut self, class: GeneratorClass, fresh: &[(usize, f64)]) {
        if fresh.is_empty() {
            return;
        }
        let m = self.dims();
        let mut extra = Array2::zeros((m, fresh.len()));
        for (col, &(row, mag)) in fresh.iter().enumerate() {
            extra[[row, col]] = mag;
        }
        let block = &mut self.blocks[class.index()];
        *block = concatenate(Axis(1), &[block.view(), extra.view()]).expect("row counts agree");
    }

    /// Widens `class` to `width` columns with zeros.
    pub(crate) fn pad_class(&mut self, class: GeneratorClass, width: usize) {
        let block = &mut self.blocks[class.index()];
        if block.ncols() < width {
            let extra = Array2::zeros((block.nrows(), width - block.ncols()));
            *block = concatenate(Axis(1), &[block.view(), extra.view()]).expect("row counts agree");
        }
    }

    /// Drops input generators whose column is identically zero.
    pub fn compress_input_generators(&self) -> Zonotope {
        self.compress_input_generators_with_map().0
    }

    /// Like [`compress_input_generators`](Self::compress_input_generators), also
    /// returning the original ordinals of the surviving input generators.
    pub fn compress_input_generators_with_map(&self) -> (Zonotope, Vec<usize>) {
        let inputs = &self.blocks[GeneratorClass::Input.index()];
        let kept: Vec<usize> = (0..inputs.ncols())
            .filter(|&j| inputs.column(j).iter().any(|&g| g != 0.0))
            .collect();
        let mut out = self.clone();
        out.blocks[GeneratorClass::Input.index()] = inputs.select(Axis(1), &kept);
        (out, kept)
    }

    pub(crate) fn from_raw(center: Array1<f64>, blocks: [Array2<f64>; 4]) -> Self {
        debug_assert!(blocks.iter().all(|b| b.nrows() == center.len()));
        Self { center, blocks }
    }
}

/// Encodes an axis-aligned box: midpoint center, one input generator per
/// dimension with the half-range on the diagonal.
pub fn box_to_zonotope(lower: &[f64], upper: &[f64]) -> Result<Zonotope> {
    if lower.len() != upper.len() {
        return Err(Error::dim("box upper", lower.len(), upper.len()));
    }
    for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
        if !(l <= u) || !l.is_finite() || !u.is_finite() {
            return Err(Error::input(
                format!("lower[{i}]"),
                format!("requires finite lower <= upper, got [{l}, {u}]"),
            ));
        }
    }
    let d = lower.len();
    let center = Array1::from_shape_fn(d, |i| 0.5 * (lower[i] + upper[i]));
    let mut gens = Array2::zeros((d, d));
    for i in 0..d {
        gens[[i, i]] = 0.5 * (upper[i] - lower[i]);
    }
    Zonotope::with_input_generators(center, gens)
}
