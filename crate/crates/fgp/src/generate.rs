//! Portfolio-generating function families.
//!
//! A [`Family`] assigns to every dimension `n` a function of the market
//! weight vector together with its gradient. The shipped families are the
//! classical ones: the market (sum), diversity, equal (geometric mean) and
//! entropy weightings, plus the rank-only top-`m` variants that operate on
//! weight vectors sorted in descending order.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("bad parameter for family {family}: {reason}")]
    BadParameter { family: String, reason: String },
    #[error("unknown family spec `{0}`")]
    UnknownFamily(String),
    #[error("weight component {index} = {value} is not positive")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Structural properties a family is known to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyFlags {
    pub symmetric: bool,
    pub concave: bool,
    pub balanced: bool,
    /// Only meaningful on vectors sorted in descending order; the unranked
    /// engine rejects such families.
    pub rank_only: bool,
}

/// A dimension-indexed generating family. The same closed form is used for
/// every dimension; the input's length selects the member.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `G(x) = sum_i x_i`, identically 1 on the simplex.
    Market,
    /// `G(x) = (sum_i x_i^p)^(1/p)` for `p` in (0, 1].
    Diversity { p: f64 },
    /// Geometric mean `G(x) = prod_i x_i^(1/n)`.
    Equal,
    /// Shannon entropy `G(x) = -sum_i x_i log x_i`.
    Entropy,
    /// `G(x) = x_1 + ... + x_min(m,n)` on descending input.
    TopMSum { m: usize },
    /// Diversity restricted to the top `m` components of descending input.
    DiversityTopM { p: f64, m: usize },
}

impl Family {
    pub fn market() -> Family {
        Family::Market
    }

    pub fn diversity(p: f64) -> Result<Family, GeneratorError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GeneratorError::BadParameter {
                family: "diversity".into(),
                reason: format!("p = {p} must be in (0, 1]"),
            });
        }
        Ok(Family::Diversity { p })
    }

    pub fn equal() -> Family {
        Family::Equal
    }

    pub fn entropy() -> Family {
        Family::Entropy
    }

    pub fn top_m_sum(m: usize) -> Result<Family, GeneratorError> {
        if m < 1 {
            return Err(GeneratorError::BadParameter {
                family: "top_m".into(),
                reason: "m must be >= 1".into(),
            });
        }
        Ok(Family::TopMSum { m })
    }

    pub fn diversity_top_m(p: f64, m: usize) -> Result<Family, GeneratorError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GeneratorError::BadParameter {
                family: "diversity_top_m".into(),
                reason: format!("p = {p} must be in (0, 1]"),
            });
        }
        if m < 1 {
            return Err(GeneratorError::BadParameter {
                family: "diversity_top_m".into(),
                reason: "m must be >= 1".into(),
            });
        }
        Ok(Family::DiversityTopM { p, m })
    }

    /// Parses a family spec string such as `market`, `diversity:p=0.25`,
    /// `equal`, `entropy`, `top_m:m=100` or `diversity_top_m:p=0.5,m=10`.
    pub fn builtin(spec: &str) -> Result<Family, GeneratorError> {
        let (name, args) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (spec.trim(), ""),
        };
        let mut p: Option<f64> = None;
        let mut m: Option<usize> = None;
        for kv in args.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| GeneratorError::UnknownFamily(spec.into()))?;
            match k.trim() {
                "p" => {
                    p = Some(v.trim().parse().map_err(|_| GeneratorError::BadParameter {
                        family: name.into(),
                        reason: format!("p = `{v}` is not a number"),
                    })?)
                }
                "m" => {
                    m = Some(v.trim().parse().map_err(|_| GeneratorError::BadParameter {
                        family: name.into(),
                        reason: format!("m = `{v}` is not an integer"),
                    })?)
                }
                _ => return Err(GeneratorError::UnknownFamily(spec.into())),
            }
        }
        let missing = |what: &str| GeneratorError::BadParameter {
            family: name.into(),
            reason: format!("missing parameter {what}"),
        };
        match name {
            "market" => Ok(Family::Market),
            "equal" => Ok(Family::Equal),
            "entropy" => Ok(Family::Entropy),
            "diversity" => Family::diversity(p.ok_or_else(|| missing("p"))?),
            "top_m" | "top_m_sum" => Family::top_m_sum(m.ok_or_else(|| missing("m"))?),
            "diversity_top_m" => Family::diversity_top_m(
                p.ok_or_else(|| missing("p"))?,
                m.ok_or_else(|| missing("m"))?,
            ),
            _ => Err(GeneratorError::UnknownFamily(spec.into())),
        }
    }

    /// Canonical spec string, parseable by [`Family::builtin`].
    pub fn spec(&self) -> String {
        match self {
            Family::Market => "market".into(),
            Family::Diversity { p } => format!("diversity:p={p}"),
            Family::Equal => "equal".into(),
            Family::Entropy => "entropy".into(),
            Family::TopMSum { m } => format!("top_m:m={m}"),
            Family::DiversityTopM { p, m } => format!("diversity_top_m:p={p},m={m}"),
        }
    }

    pub fn flags(&self) -> FamilyFlags {
        match self {
            Family::Market | Family::Diversity { .. } | Family::Equal => FamilyFlags {
                symmetric: true,
                concave: true,
                balanced: true,
                rank_only: false,
            },
            Family::Entropy => FamilyFlags {
                symmetric: true,
                concave: true,
                balanced: false,
                rank_only: false,
            },
            Family::TopMSum { .. } | Family::DiversityTopM { .. } => FamilyFlags {
                symmetric: false,
                concave: true,
                balanced: true,
                rank_only: true,
            },
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, GeneratorError> {
        check_positive(x)?;
        let n = x.len();
        Ok(match self {
            Family::Market => x.iter().sum(),
            Family::Diversity { p } => x.iter().map(|&v| v.powf(*p)).sum::<f64>().powf(1.0 / p),
            Family::Equal => {
                let inv_n = 1.0 / n as f64;
                (x.iter().map(|&v| v.ln()).sum::<f64>() * inv_n).exp()
            }
            Family::Entropy => -x.iter().map(|&v| v * v.ln()).sum::<f64>(),
            Family::TopMSum { m } => x.iter().take(*m).sum(),
            Family::DiversityTopM { p, m } => x
                .iter()
                .take(*m)
                .map(|&v| v.powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, GeneratorError> {
        check_positive(x)?;
        let n = x.len();
        Ok(match self {
            Family::Market => vec![1.0; n],
            Family::Diversity { p } => {
                let s: f64 = x.iter().map(|&v| v.powf(*p)).sum();
                let outer = s.powf(1.0 / p - 1.0);
                x.iter().map(|&v| v.powf(p - 1.0) * outer).collect()
            }
            Family::Equal => {
                let g = self.value(x)?;
                let inv_n = 1.0 / n as f64;
                x.iter().map(|&v| g * inv_n / v).collect()
            }
            Family::Entropy => x.iter().map(|&v| -v.ln() - 1.0).collect(),
            Family::TopMSum { m } => (0..n).map(|i| if i < *m { 1.0 } else { 0.0 }).collect(),
            Family::DiversityTopM { p, m } => {
                let s: f64 = x.iter().take(*m).map(|&v| v.powf(*p)).sum();
                let outer = s.powf(1.0 / p - 1.0);
                (0..n)
                    .map(|i| {
                        if i < *m {
                            x[i].powf(p - 1.0) * outer
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        })
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.spec())
    }
}

impl std::str::FromStr for Family {
    type Err = GeneratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::builtin(s)
    }
}

fn check_positive(x: &[f64]) -> Result<(), GeneratorError> {
    for (index, &value) in x.iter().enumerate() {
        if !value.is_finite() || value <= 0.0 {
            return Err(GeneratorError::NonPositiveWeight { index, value });
        }
    }
    Ok(())
}

/// Bregman divergence `G(x) - G(y) - <grad G(y), x - y>`; nonpositive for
/// concave families.
pub fn bregman(fam: &Family, x: &[f64], y: &[f64]) -> Result<f64, GeneratorError> {
    if x.len() != y.len() {
        return Err(GeneratorError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let gx = fam.value(x)?;
    let gy = fam.value(y)?;
    let grad = fam.gradient(y)?;
    let mut inner = 0.0;
    for i in 0..x.len() {
        inner += grad[i] * (x[i] - y[i]);
    }
    Ok(gx - gy - inner)
}

/// `sum_i x_i d_i G(x) - G(x)`; zero iff the family is balanced at `x`.
pub fn balance_residual(fam: &Family, x: &[f64]) -> Result<f64, GeneratorError> {
    let g = fam.value(x)?;
    let grad = fam.gradient(x)?;
    let weighted: f64 = x.iter().zip(&grad).map(|(xi, gi)| xi * gi).sum();
    Ok(weighted - g)
}
