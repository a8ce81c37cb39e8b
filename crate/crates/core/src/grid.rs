//! Quadrature grids on the circle and functions sampled on them.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::BinaryAngle;
use crate::conjugate::CircleFunction;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Nodes with positive weights summing to one (normalized Lebesgue measure).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<BinaryAngle>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<BinaryAngle>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::GridMismatch(format!(
                "{} nodes vs {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("grid nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Domain("grid weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("grid weights sum to {total}, not 1")));
        }
        Ok(Self { nodes, weights })
    }

    /// `M` equally spaced nodes `(k + offset)/M`, weights `1/M`. `M` must be a
    /// power of two so nodes are exact binary fractions; `half_shift` moves
    /// every node by half a cell.
    pub fn uniform(m: usize, half_shift: bool, bits: u32) -> Result<Self> {
        if !m.is_power_of_two() || m < 2 {
            return Err(Error::Domain(format!("uniform grid size must be a power of two ≥ 2, got {m}")));
        }
        let level = m.trailing_zeros();
        let nodes = if half_shift {
            (0..m as u64)
                .map(|k| BinaryAngle::from_dyadic(2 * k + 1, level + 1, bits))
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..m as u64)
                .map(|k| BinaryAngle::from_dyadic(k, level, bits))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { nodes, weights: vec![1.0 / m as f64; m] })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[BinaryAngle] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.nodes.iter().map(|t| t.to_complex()).collect()
    }

    /// Samples `f` at every node.
    pub fn sample<F: CircleFunction + Sync + ?Sized>(self: &Arc<Self>, f: &F, exec: Execution) -> GridFunction {
        let values = exec.map_slice(&self.nodes, |t| f.eval(t));
        GridFunction::new(self.clone(), values).expect("lengths match")
    }

    /// `Σ wᵢ f(zᵢ)`.
    pub fn integrate(&self, values: &[Complex64]) -> Complex64 {
        self.weights.iter().zip(values).map(|(w, v)| v * *w).sum()
    }
}

/// Values of a function on a [`Grid`], plus nodes flagged as lying near a
/// singular locus.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
    singular: Vec<bool>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values on {} nodes", values.len(), grid.len())));
        }
        let singular = vec![false; values.len()];
        Ok(Self { grid, values, singular })
    }

    pub fn constant(grid: Arc<Grid>, c: Complex64) -> Self {
        let n = grid.len();
        Self::new(grid, vec![c; n]).expect("lengths match")
    }

    pub fn with_singular_marks(mut self, marks: Vec<bool>) -> Result<Self> {
        if marks.len() != self.values.len() {
            return Err(Error::GridMismatch("singular marks length".into()));
        }
        self.singular = marks;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn singular_marks(&self) -> &[bool] {
        &self.singular
    }

    fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `⟨f, g⟩ = Σ wᵢ f(zᵢ) conj(g(zᵢ))`.
    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("inner product of functions on different grids".into()));
        }
        Ok(self
            .grid
            .weights
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| a * b.conj() * *w)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.grid
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(&BinaryAngle, Complex64) -> Complex64) -> Self {
        let values = self.grid.nodes.iter().zip(&self.values).map(|(t, v)| f(t, *v)).collect();
        Self { grid: self.grid.clone(), values, singular: self.singular.clone() }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for i in 0..self.values.len() {
            wr.serialize(CsvRow {
                angle_hex: self.grid.nodes[i].to_hex(),
                re: self.values[i].re,
                im: self.values[i].im,
                weight: self.grid.weights[i],
                singular_flag: u8::from(self.singular[i]),
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut nodes = vec![];
        let mut weights = vec![];
        let mut values = vec![];
        let mut marks = vec![];
        for row in rd.deserialize() {
            let row: CsvRow = row?;
            nodes.push(BinaryAngle::from_hex(&row.angle_hex)?);
            weights.push(row.weight);
            values.push(Complex64::new(row.re, row.im));
            marks.push(match row.singular_flag {
                0 => false,
                1 => true,
                f => return Err(Error::Parse(format!("singular_flag must be 0 or 1, got {f}"))),
            });
        }
        let grid = Arc::new(Grid::new(nodes, weights)?);
        GridFunction::new(grid, values)?.with_singular_marks(marks)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    angle_hex: String,
    re: f64,
    im: f64,
    weight: f64,
    singular_flag: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::LaurentPoly;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn grid(m: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(m, false, 256).unwrap())
    }

    #[test]
    fn constant_has_unit_norm() {
        let g = grid(16);
        let f = GridFunction::constant(g, one());
        assert!((f.inner_product(&f).unwrap() - one()).norm() < 1e-15);
    }

    #[test]
    fn characters_are_orthonormal() {
        let g = grid(2);
        let z = g.sample(&LaurentPoly::monomial(1, one()), Execution::Sequential);
        let c = GridFunction::constant(g.clone(), one());
        assert!((z.inner_product(&z).unwrap() - one()).norm() < 1e-15);
        assert!(z.inner_product(&c).unwrap().norm() < 1e-15);
    }

    #[test]
    fn fourier_orthogonality_oracle() {
        // <z^2 + z^-1, z^-1> = 1 exactly (coefficient of z^-1)
        let g = grid(8);
        let f = g.sample(&LaurentPoly::from_terms(&[(2, one()), (-1, one())]), Execution::Sequential);
        let h = g.sample(&LaurentPoly::monomial(-1, one()), Execution::Sequential);
        assert!((f.inner_product(&h).unwrap() - one()).norm() < 1e-15);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = GridFunction::constant(grid(8), one());
        let b = GridFunction::constant(grid(16), one());
        assert!(matches!(a.inner_product(&b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn conjugate_symmetry_and_positivity() {
        let g = grid(32);
        let f = g.sample(&LaurentPoly::from_terms(&[(3, Complex64::new(1.0, 2.0)), (-2, one())]), Execution::Parallel);
        let h = g.sample(&LaurentPoly::from_terms(&[(1, Complex64::new(0.0, -1.0)), (-2, one())]), Execution::Parallel);
        let a = f.inner_product(&h).unwrap();
        let b = h.inner_product(&f).unwrap();
        assert!((a - b.conj()).norm() < 1e-15);
        let d = f.inner_product(&f).unwrap();
        assert!(d.re > 0.0 && d.im.abs() < 1e-15);
    }

    #[test]
    fn invalid_grids() {
        assert!(Grid::uniform(12, false, 256).is_err());
        let t = BinaryAngle::zero(256).unwrap();
        assert!(Grid::new(vec![t, t], vec![0.5, 0.5]).is_err());
        let u = BinaryAngle::from_dyadic(1, 1, 256).unwrap();
        assert!(Grid::new(vec![t, u], vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(4);
        let f = g
            .sample(&LaurentPoly::monomial(1, one()), Execution::Sequential)
            .with_singular_marks(vec![false, true, false, false])
            .unwrap();
        let mut buf = vec![];
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("angle_hex,re,im,weight,singular_flag\n"));
        assert!(text.lines().nth(2).unwrap().starts_with("4000000000000000"));
        let back = GridFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.singular_marks(), f.singular_marks());
        assert_eq!(back.grid().nodes(), f.grid().nodes());
    }
}
