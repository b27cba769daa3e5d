use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current and initial opinions of `n` individuals in `d`-dimensional
/// opinion space, one individual per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    opinions: DMatrix<f64>,
    initial: DMatrix<f64>,
}

impl Population {
    /// Population whose initial opinions equal the given current opinions.
    pub fn new(opinions: DMatrix<f64>) -> Result<Self> {
        let initial = opinions.clone();
        Self::with_initial(initial, opinions)
    }

    pub fn with_initial(initial: DMatrix<f64>, opinions: DMatrix<f64>) -> Result<Self> {
        if initial.shape() != opinions.shape() {
            return Err(Error::invalid(format!(
                "initial opinions {:?} and opinions {:?} differ in shape",
                initial.shape(),
                opinions.shape()
            )));
        }
        if opinions.nrows() < 2 {
            return Err(Error::invalid(format!(
                "population needs at least 2 individuals, got {}",
                opinions.nrows()
            )));
        }
        if opinions.ncols() < 1 {
            return Err(Error::invalid("opinion dimension must be at least 1"));
        }
        if opinions.iter().chain(initial.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("opinions must be finite"));
        }
        Ok(Population { opinions, initial })
    }

    pub fn len(&self) -> usize {
        self.opinions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.opinions.ncols()
    }

    pub fn opinions(&self) -> &DMatrix<f64> {
        &self.opinions
    }

    pub fn initial_opinions(&self) -> &DMatrix<f64> {
        &self.initial
    }

    pub fn opinion(&self, i: usize) -> DVector<f64> {
        self.opinions.row(i).transpose()
    }

    /// Replaces the current opinions, keeping the initial ones.
    pub fn with_opinions(&self, opinions: DMatrix<f64>) -> Result<Self> {
        Self::with_initial(self.initial.clone(), opinions)
    }

    pub fn mean_opinion(&self) -> DVector<f64> {
        self.opinions.row_mean().transpose()
    }

    /// Writes the snapshot CSV: `id,x0_0,..,x0_{d-1},x_0,..,x_{d-1}`.
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend((0..d).map(|k| format!("x0_{k}")));
        header.extend((0..d).map(|k| format!("x_{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string()];
            rec.extend((0..d).map(|k| self.initial[(i, k)].to_string()));
            rec.extend((0..d).map(|k| self.opinions[(i, k)].to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<snapshot>", e))?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || (header.len() - 1) % 2 != 0 || &header[0] != "id" {
            return Err(Error::InvalidInput(format!(
                "unexpected snapshot header: {header:?}"
            )));
        }
        let d = (header.len() - 1) / 2;
        let mut init = Vec::new();
        let mut cur = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line + 2,
                    message: e.to_string(),
                })
            };
            for k in 0..d {
                init.push(parse(1 + k)?);
            }
            for k in 0..d {
                cur.push(parse(1 + d + k)?);
            }
        }
        let n = init.len() / d;
        Self::with_initial(
            DMatrix::from_row_slice(n, d, &init),
            DMatrix::from_row_slice(n, d, &cur),
        )
    }
}

/// One Gaussian component of a synthetic initial-opinion mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub covariance: Vec<Vec<f64>>,
    pub fraction: f64,
}

impl MixtureComponent {
    pub fn isotropic(mean: Vec<f64>, variance: f64, fraction: f64) -> Self {
        let d = mean.len();
        let covariance = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        MixtureComponent {
            mean,
            covariance,
            fraction,
        }
    }

    /// Square-root factor `L` with `L L^T = covariance`, via the symmetric
    /// eigendecomposition so that singular covariances are accepted.
    fn factor(&self) -> Result<DMatrix<f64>> {
        let d = self.mean.len();
        if self.covariance.len() != d || self.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::invalid(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| self.covariance[i][j]);
        let scale = cov.amax().max(1.0);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance must be finite"));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::invalid("covariance is not positive semi-definite"));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
    }
}

/// Allocates `n` draws to components by largest remainder.
fn component_counts(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

/// Draws `n` initial opinions from a Gaussian mixture.
///
/// Component sizes are allocated by largest remainder from the fractions and
/// individuals are ordered by component. Deterministic for a fixed seed.
pub fn generate_synthetic_population(
    n: usize,
    components: &[MixtureComponent],
    seed: u64,
) -> Result<Population> {
    if components.is_empty() {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    let d = components[0].mean.len();
    if d == 0 || components.iter().any(|c| c.mean.len() != d) {
        return Err(Error::invalid("mixture components must share a dimension >= 1"));
    }
    if components.iter().any(|c| !(c.fraction >= 0.0)) {
        return Err(Error::invalid("mixture fractions must be non-negative"));
    }
    let total: f64 = components.iter().map(|c| c.fraction).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("mixture fractions sum to {total}, expected 1")));
    }
    let factors = components
        .iter()
        .map(MixtureComponent::factor)
        .collect::<Result<Vec<_>>>()?;
    let fractions: Vec<f64> = components.iter().map(|c| c.fraction).collect();
    let counts = component_counts(n, &fractions);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::<f64>::zeros(n, d);
    let mut row = 0;
    for ((comp, l), &count) in components.iter().zip(&factors).zip(&counts) {
        let mean = DVector::from_column_slice(&comp.mean);
        for _ in 0..count {
            let z = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let draw = &mean + l * z;
            x.row_mut(row).copy_from(&draw.transpose());
            row += 1;
        }
    }
    Population::new(x)
}
