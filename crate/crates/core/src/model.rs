//! Parameter and data containers: regime coefficient matrices, the latent
//! chain's transition matrix, observed series, and their interchange formats.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::linalg::spectral_norm;

/// Margin used by the stationarity certificate: max_i ||B_i||_2 <= 1 - MARGIN.
pub const STATIONARITY_MARGIN: f64 = 1e-6;
/// Row sums within this tolerance are accepted as exactly stochastic.
pub const ROW_SUM_STRICT_TOL: f64 = 1e-12;
/// Row sums off by at most this much are renormalized with a flag.
pub const ROW_SUM_RENORM_TOL: f64 = 1e-8;

/// Full model parameter vector: K regime coefficient matrices, the K x K
/// transition matrix, and the isotropic noise variance.
///
/// The prediction in regime i is `B_i' Y_{t-1}`, so column j of `B_i` is the
/// regression vector for output coordinate j. Vectorized coefficient stacks
/// are column-stacked per regime, regimes concatenated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    coeffs: Vec<Array2<f64>>,
    trans: Array2<f64>,
    sigma2: f64,
    renormalized: bool,
}

impl ModelParams {
    pub fn new(coeffs: Vec<Array2<f64>>, trans: Array2<f64>, sigma2: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(CoreError::InvalidInput("no coefficient matrices".into()));
        }
        let d = coeffs[0].nrows();
        for (i, b) in coeffs.iter().enumerate() {
            if b.nrows() != d || b.ncols() != d {
                return Err(CoreError::InvalidInput(format!(
                    "coefficient matrix {i} is {}x{}, expected {d}x{d}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "coefficient matrix {i} has non-finite entries"
                )));
            }
        }
        let k = coeffs.len();
        if trans.nrows() != k || trans.ncols() != k {
            return Err(CoreError::InvalidInput(format!(
                "transition matrix is {}x{}, expected {k}x{k}",
                trans.nrows(),
                trans.ncols()
            )));
        }
        if trans
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + ROW_SUM_RENORM_TOL)
        {
            return Err(CoreError::InvalidInput(
                "transition entries must lie in [0,1]".into(),
            ));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CoreError::Domain(format!(
                "sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        let mut trans = trans;
        let mut renormalized = false;
        for mut row in trans.rows_mut() {
            let s: f64 = row.sum();
            let dev = (s - 1.0).abs();
            if dev <= ROW_SUM_STRICT_TOL {
                continue;
            }
            if dev <= ROW_SUM_RENORM_TOL {
                row.mapv_inplace(|v| v / s);
                renormalized = true;
            } else {
                return Err(CoreError::InvalidInput(format!(
                    "transition row sums to {s}, outside tolerance"
                )));
            }
        }
        Ok(Self {
            coeffs,
            trans,
            sigma2,
            renormalized,
        })
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn coeffs(&self) -> &[Array2<f64>] {
        &self.coeffs
    }

    pub fn coeff(&self, regime: usize) -> &Array2<f64> {
        &self.coeffs[regime]
    }

    pub fn trans(&self) -> &Array2<f64> {
        &self.trans
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// True when the input transition rows needed renormalization.
    pub fn was_renormalized(&self) -> bool {
        self.renormalized
    }

    /// Sufficient stationarity condition: max_i ||B_i||_2 <= 1 - 1e-6.
    /// Certifies strict stationarity and geometric ergodicity; a false
    /// result does not prove non-stationarity.
    pub fn is_stationary_certified(&self) -> bool {
        self.max_spectral_norm() <= 1.0 - STATIONARITY_MARGIN
    }

    pub fn max_spectral_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|b| spectral_norm(b.view()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Column-stacked coefficient vector beta = (vec(B_1)', ..., vec(B_K)')'.
    pub fn beta_stack(&self) -> Array1<f64> {
        let d = self.dim();
        let mut out = Array1::zeros(self.k() * d * d);
        let mut idx = 0;
        for b in &self.coeffs {
            for col in 0..d {
                for row in 0..d {
                    out[idx] = b[[row, col]];
                    idx += 1;
                }
            }
        }
        out
    }

    /// Number of nonzero coefficients across all regimes.
    pub fn beta_l0(&self) -> usize {
        self.coeffs
            .iter()
            .map(|b| b.iter().filter(|v| **v != 0.0).count())
            .sum()
    }

    pub fn support(&self) -> SupportSet {
        SupportSet::from_beta(self.beta_stack().view())
    }

    /// Relabel regimes: regime i of the result is regime perm[i] of self,
    /// with rows and columns of the transition matrix permuted accordingly.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        if perm.len() != k {
            return Err(CoreError::InvalidInput(
                "permutation length mismatch".into(),
            ));
        }
        let mut seen = vec![false; k];
        for &p in perm {
            if p >= k || seen[p] {
                return Err(CoreError::InvalidInput("not a permutation".into()));
            }
            seen[p] = true;
        }
        let coeffs = perm.iter().map(|&p| self.coeffs[p].clone()).collect();
        let mut trans = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                trans[[i, j]] = self.trans[[perm[i], perm[j]]];
            }
        }
        Self::new(coeffs, trans, self.sigma2)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = ModelParamsJson::from(self);
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ModelParamsJson = serde_json::from_str(s)?;
        raw.into_params()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// JSON interchange schema:
/// {"K":int,"d":int,"coeffs":[[row-major d*d]...],"trans":[[K x K]],"sigma2":float}
#[derive(Serialize, Deserialize)]
struct ModelParamsJson {
    #[serde(rename = "K")]
    k: usize,
    d: usize,
    coeffs: Vec<Vec<f64>>,
    trans: Vec<Vec<f64>>,
    sigma2: f64,
}

impl From<&ModelParams> for ModelParamsJson {
    fn from(p: &ModelParams) -> Self {
        let d = p.dim();
        Self {
            k: p.k(),
            d,
            coeffs: p
                .coeffs
                .iter()
                .map(|b| b.iter().cloned().collect()) // row-major
                .collect(),
            trans: p.trans.rows().into_iter().map(|r| r.to_vec()).collect(),
            sigma2: p.sigma2,
        }
    }
}

impl ModelParamsJson {
    fn into_params(self) -> Result<ModelParams> {
        let d = self.d;
        if self.coeffs.len() != self.k {
            return Err(CoreError::InvalidInput(format!(
                "expected {} coefficient matrices, found {}",
                self.k,
                self.coeffs.len()
            )));
        }
        let coeffs = self
            .coeffs
            .into_iter()
            .map(|flat| {
                Array2::from_shape_vec((d, d), flat)
                    .map_err(|e| CoreError::InvalidInput(format!("coefficient matrix shape: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trans = Array2::zeros((self.k, self.k));
        if self.trans.len() != self.k {
            return Err(CoreError::InvalidInput("trans row count mismatch".into()));
        }
        for (i, row) in self.trans.iter().enumerate() {
            if row.len() != self.k {
                return Err(CoreError::InvalidInput("trans row length mismatch".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                trans[[i, j]] = v;
            }
        }
        ModelParams::new(coeffs, trans, self.sigma2)
    }
}

/// Observed series: rows Y_0..Y_T, plus the latent path Z_1..Z_T when the
/// data came from the simulator (values 1..=K).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    y: Array2<f64>,
    z: Option<Vec<usize>>,
}

impl SeriesData {
    pub fn new(y: Array2<f64>, z: Option<Vec<usize>>) -> Result<Self> {
        if y.nrows() < 2 {
            return Err(CoreError::InvalidInput(
                "series needs at least rows Y_0 and Y_1".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput(
                "series has non-finite entries".into(),
            ));
        }
        if let Some(z) = &z {
            if z.len() != y.nrows() - 1 {
                return Err(CoreError::InvalidInput(format!(
                    "latent path length {} does not match T={}",
                    z.len(),
                    y.nrows() - 1
                )));
            }
            if z.iter().any(|&v| v == 0) {
                return Err(CoreError::InvalidInput(
                    "latent regimes are 1-based; found 0".into(),
                ));
            }
        }
        Ok(Self { y, z })
    }

    /// Number of modeled transitions T (rows are Y_0..Y_T).
    pub fn t_len(&self) -> usize {
        self.y.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    /// Observation row at time t (0-based time, t in 0..=T).
    pub fn y_at(&self, t: usize) -> ArrayView1<'_, f64> {
        self.y.row(t)
    }

    /// Latent path Z_1..Z_T with 1-based regime values, when present.
    pub fn z(&self) -> Option<&[usize]> {
        self.z.as_deref()
    }

    /// 0-based regime index at time t (t in 1..=T), when the path is present.
    pub fn regime_index_at(&self, t: usize) -> Option<usize> {
        self.z.as_ref().map(|z| z[t - 1] - 1)
    }

    /// CSV schema: header `t,y1..yd[,z]`; row t=0 carries an empty z field.
    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let d = self.dim();
        let mut header = String::from("t");
        for i in 1..=d {
            header.push_str(&format!(",y{i}"));
        }
        if self.z.is_some() {
            header.push_str(",z");
        }
        writeln!(w, "{header}")?;
        for t in 0..self.y.nrows() {
            let mut line = t.to_string();
            for v in self.y.row(t) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            if let Some(z) = &self.z {
                line.push(',');
                if t >= 1 {
                    line.push_str(&z[t - 1].to_string());
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)
    }

    pub fn read_csv(r: &mut dyn BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::InvalidInput("empty csv".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(CoreError::InvalidInput(
                "series csv must start with column 't'".into(),
            ));
        }
        let has_z = cols.last() == Some(&"z");
        let d = cols.len() - 1 - usize::from(has_z);
        if d == 0 {
            return Err(CoreError::InvalidInput("no y columns in csv".into()));
        }
        let mut rows: Vec<f64> = Vec::new();
        let mut z: Vec<usize> = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(CoreError::InvalidInput(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            for f in &fields[1..=d] {
                let v: f64 = f.parse().map_err(|_| {
                    CoreError::InvalidInput(format!("line {}: bad number '{f}'", lineno + 2))
                })?;
                rows.push(v);
            }
            if has_z && n >= 1 {
                let zf = fields[d + 1];
                let v: usize = zf.parse().map_err(|_| {
                    CoreError::InvalidInput(format!("line {}: bad regime '{zf}'", lineno + 2))
                })?;
                z.push(v);
            }
            n += 1;
        }
        let y = Array2::from_shape_vec((n, d), rows)
            .map_err(|e| CoreError::InvalidInput(format!("csv shape: {e}")))?;
        SeriesData::new(y, if has_z { Some(z) } else { None })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(&mut f)
    }
}

/// Sorted positions into the stacked coefficient vector of length K*d*d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn from_beta(beta: ArrayView1<f64>) -> Self {
        let indices = beta
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v != 0.0).then_some(i))
            .collect();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    pub fn intersection_size(&self, other: &SupportSet) -> usize {
        self.indices.iter().filter(|i| other.contains(**i)).count()
    }
}

/// Report-only diagnostics for a parameter vector.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub stationarity_certified: bool,
    pub max_spectral_norm: f64,
    pub xi: f64,
    pub renormalized: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Diagnostic validation of already-constructed parameters. Construction
/// enforces the hard invariants; this reports the soft ones (stationarity
/// certificate, mixing coefficient) without blocking anything.
pub fn validate(params: &ModelParams) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, row) in params.trans().rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > ROW_SUM_STRICT_TOL {
            violations.push(format!("transition row {i} sums to {s}"));
        }
        if row.iter().any(|&v| v < 0.0 || v > 1.0) {
            violations.push(format!("transition row {i} leaves [0,1]"));
        }
    }
    if params.sigma2() <= 0.0 {
        violations.push(format!("sigma2 = {} not positive", params.sigma2()));
    }
    let max_norm = params.max_spectral_norm();
    let certified = max_norm <= 1.0 - STATIONARITY_MARGIN;
    if !certified {
        violations.push(format!(
            "stationarity certificate failed: max ||B_i||_2 = {max_norm:.6}"
        ));
    }
    ValidationReport {
        violations,
        stationarity_certified: certified,
        max_spectral_norm: max_norm,
        xi: crate::diagnostics::xi_coefficient(params.trans().view()),
        renormalized: params.was_renormalized(),
    }
}

/// Raw-input validation used by the CLI: checks row sums and sigma2 on
/// unconstructed values, so violations can be listed instead of erroring.
pub fn validate_raw(trans: &Array2<f64>, sigma2: f64) -> Vec<String> {
    let mut violations = Vec::new();
    for (i, row) in trans.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > ROW_SUM_RENORM_TOL {
            violations.push(format!("transition row {i} sums to {s}"));
        }
    }
    if sigma2 <= 0.0 {
        violations.push(format!("sigma2 = {sigma2} not positive"));
    }
    violations
}
