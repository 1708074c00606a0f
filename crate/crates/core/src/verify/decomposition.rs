use log::warn;

use crate::error::{KbcError, Result};

/// Dense `n1 x n2 x n3` tensor, `data[(i * n2 + j) * n3 + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(KbcError::DimensionMismatch(format!(
                "{} entries for a {}x{}x{} tensor",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "tensor shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }
}

/// `p`-norm for `p` in `[1, inf]`.
pub fn pnorm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    if p == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(KbcError::Unsupported(format!("p = {p}; need p in [1, inf]")))
    }
}

/// CP decomposition `sum_r u_r^(1) (x) u_r^(2) (x) u_r^(3)` of a small tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallDecomposition {
    dims: [usize; 3],
    components: Vec<[Vec<f64>; 3]>,
}

impl SmallDecomposition {
    pub fn new(dims: [usize; 3], components: Vec<[Vec<f64>; 3]>) -> Result<Self> {
        for (r, c) in components.iter().enumerate() {
            for d in 0..3 {
                if c[d].len() != dims[d] {
                    return Err(KbcError::DimensionMismatch(format!(
                        "component {r}, mode {d}: {} entries, expected {}",
                        c[d].len(),
                        dims[d]
                    )));
                }
            }
        }
        Ok(SmallDecomposition { dims, components })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[[Vec<f64>; 3]] {
        &self.components
    }

    pub fn mode_norms(&self, r: usize, p: f64) -> [f64; 3] {
        let c = &self.components[r];
        [pnorm(&c[0], p), pnorm(&c[1], p), pnorm(&c[2], p)]
    }

    pub fn reconstruct(&self) -> Tensor3 {
        let mut t = Tensor3::zeros(self.dims);
        for c in &self.components {
            for (i, &a) in c[0].iter().enumerate() {
                for (j, &b) in c[1].iter().enumerate() {
                    let ab = a * b;
                    for (k, &x) in c[2].iter().enumerate() {
                        let o = t.offset(i, j, k);
                        t.data[o] += ab * x;
                    }
                }
            }
        }
        t
    }
}

/// `(1/3) sum_r sum_d ||u_r^(d)||_p^alpha`.
pub fn omega(u: &SmallDecomposition, p: f64, alpha: f64) -> Result<f64> {
    check_p(p)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(KbcError::Unsupported(format!("alpha = {alpha}; need alpha > 0")));
    }
    let mut total = 0.0;
    for r in 0..u.rank() {
        for a in u.mode_norms(r, p) {
            total += a.powf(alpha);
        }
    }
    Ok(total / 3.0)
}

/// `sum_r prod_d ||u_r^(d)||_p^(alpha/3)`: the smallest `omega` reachable by
/// rescaling the modes of each component.
pub fn balanced_value(u: &SmallDecomposition, p: f64, alpha: f64) -> Result<f64> {
    check_p(p)?;
    Ok((0..u.rank())
        .map(|r| {
            let [a, b, c] = u.mode_norms(r, p);
            (a * b * c).powf(alpha / 3.0)
        })
        .sum())
}

/// Rescales every component by `c_d = g / a_d`, `g` the geometric mean of
/// its mode norms `a_d`, so all three norms become `g`. Components with a
/// zero vector represent nothing and are dropped.
pub fn balance(u: &SmallDecomposition, p: f64) -> Result<SmallDecomposition> {
    check_p(p)?;
    let mut components = Vec::with_capacity(u.rank());
    for (r, comp) in u.components.iter().enumerate() {
        let a = u.mode_norms(r, p);
        if a.contains(&0.0) {
            warn!("component {r} has a zero mode vector; dropped");
            continue;
        }
        let g = (a[0] * a[1] * a[2]).cbrt();
        let scaled: [Vec<f64>; 3] = std::array::from_fn(|d| {
            let c = g / a[d];
            comp[d].iter().map(|x| x * c).collect()
        });
        components.push(scaled);
    }
    Ok(SmallDecomposition {
        dims: u.dims,
        components,
    })
}

/// Spectrum `sigma_r = prod_d ||u_r^(d)||_p` with unit-norm directions.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedDecomposition {
    pub p: f64,
    pub sigma: Vec<f64>,
    pub directions: Vec<[Vec<f64>; 3]>,
}

impl NormalizedDecomposition {
    pub fn from_decomposition(u: &SmallDecomposition, p: f64) -> Result<Self> {
        check_p(p)?;
        let mut sigma = Vec::new();
        let mut directions = Vec::new();
        for (r, comp) in u.components.iter().enumerate() {
            let a = u.mode_norms(r, p);
            if a.contains(&0.0) {
                continue;
            }
            sigma.push(a[0] * a[1] * a[2]);
            directions.push(std::array::from_fn(|d| comp[d].iter().map(|x| x / a[d]).collect()));
        }
        Ok(NormalizedDecomposition { p, sigma, directions })
    }

    /// Balanced decomposition with every mode carrying `sigma_r^(1/3)`.
    pub fn to_decomposition(&self, dims: [usize; 3]) -> Result<SmallDecomposition> {
        let components = self
            .sigma
            .iter()
            .zip(&self.directions)
            .map(|(&s, dir)| {
                let c = s.cbrt();
                std::array::from_fn(|d| dir[d].iter().map(|x| x * c).collect())
            })
            .collect();
        SmallDecomposition::new(dims, components)
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// `(sum_r sigma_r^q)^(1/q)` for `q > 0`.
pub fn spectrum_qnorm(sigma: &[f64], q: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(KbcError::Unsupported(format!("q = {q}; need q > 0")));
    }
    if q.is_infinite() {
        return Ok(sigma.iter().fold(0.0, |m, s| m.max(s.abs())));
    }
    if q == 1.0 {
        return Ok(sigma.iter().map(|s| s.abs()).sum());
    }
    Ok(sigma.iter().map(|s| s.abs().powf(q)).sum::<f64>().powf(1.0 / q))
}

#[cfg(test)]
pub(crate) use tests::random_decomposition;
