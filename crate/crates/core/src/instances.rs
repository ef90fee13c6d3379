//! Hard and experimental instance families.
//!
//! Every constructor returns a [`BanditInstance`] with `f^(-1) = 1/2` and a
//! bumped `f^(+1)`, uniform contexts, and the `(alpha, beta, L)` it was built
//! for, together with a margin envelope that the construction guarantees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{
    BanditInstance, BumpGrid, CovariateLaw, DeclaredParams, InstanceError, MarginEnvelope, MeanFunction,
};
use crate::plan::gamma;

/// Where the bump signs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Signs {
    Explicit(Vec<i8>),
    /// I.i.d. Rademacher signs drawn from a seeded stream.
    Seed(u64),
}

impl Signs {
    fn resolve(&self, len: usize) -> Result<Vec<i8>, InstanceError> {
        match self {
            Signs::Explicit(v) => {
                if v.len() != len {
                    return Err(InstanceError::SignLength {
                        expected: len,
                        got: v.len(),
                    });
                }
                if let Some(bad) = v.iter().find(|s| **s != 1 && **s != -1) {
                    return Err(InstanceError::InvalidParameter {
                        name: "signs",
                        reason: format!("entries must be +1 or -1, got {bad}"),
                    });
                }
                Ok(v.clone())
            }
            Signs::Seed(seed) => Ok(rademacher(*seed, len)),
        }
    }
}

/// `len` Rademacher signs from `seed`.
pub fn rademacher(seed: u64, len: usize) -> Vec<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

fn check_exponents(alpha: f64, beta: f64, lipschitz: f64) -> Result<(), InstanceError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(InstanceError::InvalidParameter {
            name: "alpha",
            reason: format!("{alpha} must be positive"),
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(InstanceError::InvalidParameter {
            name: "beta",
            reason: format!("{beta} must lie in (0, 1]"),
        });
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(InstanceError::InvalidParameter {
            name: "L",
            reason: format!("{lipschitz} must be positive"),
        });
    }
    if alpha * beta > 1.0 {
        return Err(InstanceError::MarginTooLarge(alpha * beta));
    }
    Ok(())
}

fn half_baseline(
    name: &str,
    dim: usize,
    fields: Vec<BumpGrid>,
    declared: DeclaredParams,
) -> Result<BanditInstance, InstanceError> {
    BanditInstance::new(
        name,
        dim,
        MeanFunction { base: 0.5, fields },
        MeanFunction::constant(0.5),
        CovariateLaw::Uniform,
        declared,
    )
}

/// Number of bumped cells `ceil(z^(d - alpha*beta))` in the `C_z` family.
pub fn cz_bump_count(z: u64, alpha: f64, beta: f64, dim: usize) -> usize {
    (z as f64).powf(dim as f64 - alpha * beta).ceil() as usize
}

/// The `C_z` family: `z^d` cells, the first `ceil(z^(d - alpha*beta))` in
/// row-major order carry bumps of height `D_phi z^(-beta)` with
/// `D_phi = min(2^(-beta) L, 1/4)`.
pub fn make_cz_instance(
    z: u64,
    alpha: f64,
    beta: f64,
    lipschitz: f64,
    dim: usize,
    signs: &Signs,
) -> Result<BanditInstance, InstanceError> {
    check_exponents(alpha, beta, lipschitz)?;
    if z == 0 {
        return Err(InstanceError::InvalidParameter {
            name: "z",
            reason: "must be at least 1".into(),
        });
    }
    if dim == 0 {
        return Err(InstanceError::ZeroDimension);
    }
    let s = cz_bump_count(z, alpha, beta, dim);
    let signs = signs.resolve(s)?;
    let d_phi = (2f64.powf(-beta) * lipschitz).min(0.25);
    let field = BumpGrid {
        origin: vec![0.0; dim],
        extent: 1.0,
        cells: z,
        amplitude: d_phi * (z as f64).powf(-beta),
        beta,
        signs,
    };
    let ratio = s as f64 / (z as f64).powf(dim as f64 - alpha * beta);
    let declared = DeclaredParams {
        alpha,
        beta,
        lipschitz,
        margin: Some(MarginEnvelope {
            delta0: 1.0,
            d0: (1.0 + dim as f64) * ratio * d_phi.powf(-alpha),
        }),
    };
    half_baseline("cz", dim, vec![field], declared)
}

/// Per-scale quantities of the multi-scale construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleSpec {
    pub batches: usize,
    pub b: f64,
    /// `T_0, ..., T_M` with `T_0 = 1`.
    pub horizons: Vec<u64>,
    /// `z_1, ..., z_M`.
    pub cells: Vec<u64>,
    /// `s_1, ..., s_M`.
    pub bumps: Vec<usize>,
    /// `M^(d-1) * sum_m s_m`.
    pub total_signs: usize,
}

/// Computes the multi-scale layout for horizon `horizon` and `batches` scales.
pub fn multiscale_spec(
    batches: usize,
    alpha: f64,
    beta: f64,
    dim: usize,
    horizon: u64,
) -> Result<MultiScaleSpec, InstanceError> {
    if batches < 2 {
        return Err(InstanceError::InvalidParameter {
            name: "M",
            reason: "the multi-scale family needs at least 2 scales".into(),
        });
    }
    if dim == 0 {
        return Err(InstanceError::ZeroDimension);
    }
    let g = gamma(alpha, beta, dim);
    let m = batches as f64;
    let b = (horizon as f64).powf((1.0 - g) / (1.0 - g.powi(batches as i32)));
    let mut horizons = vec![1u64];
    for k in 1..=batches {
        let e = (1.0 - g.powi(k as i32)) / (1.0 - g);
        horizons.push(b.powf(e).floor() as u64);
    }
    let p = 2.0 * beta + dim as f64;
    let mut cells = Vec::with_capacity(batches);
    let mut bumps = Vec::with_capacity(batches);
    for k in 1..=batches {
        let z = (36.0 * horizons[k - 1] as f64 * m * m).powf(1.0 / p).ceil() as u64;
        let s = (m.powf(-alpha * beta) * (z as f64).powf(dim as f64 - alpha * beta)).ceil() as usize;
        let capacity = (z as u128).pow(dim as u32);
        if s as u128 > capacity {
            return Err(InstanceError::OverlappingBumps(format!(
                "scale {k} needs {s} bumps but has only {capacity} cells"
            )));
        }
        cells.push(z);
        bumps.push(s);
    }
    let total_signs = batches.pow(dim as u32 - 1) * bumps.iter().sum::<usize>();
    Ok(MultiScaleSpec {
        batches,
        b,
        horizons,
        cells,
        bumps,
        total_signs,
    })
}

/// Multi-scale family: `[0,1]^d` is cut into `M^d` blocks; the blocks with
/// row-major index in `I_m` are refined into `z_m^d` cells and the first
/// `s_m` of those carry bumps of height `D_phi (M z_m)^(-beta)`.
pub fn make_multiscale_instance(
    batches: usize,
    alpha: f64,
    beta: f64,
    lipschitz: f64,
    dim: usize,
    horizon: u64,
    signs: &Signs,
) -> Result<BanditInstance, InstanceError> {
    check_exponents(alpha, beta, lipschitz)?;
    let spec = multiscale_spec(batches, alpha, beta, dim, horizon)?;
    let signs = signs.resolve(spec.total_signs)?;
    let d_phi = (2f64.powf(-beta) * lipschitz).min(0.25);
    let m = batches as u64;
    let per_scale = m.pow(dim as u32 - 1);
    let width = 1.0 / m as f64;
    let mut fields = Vec::new();
    let mut cursor = 0usize;
    let mut worst_ratio = 0.0_f64;
    for (k, (&z, &s)) in spec.cells.iter().zip(&spec.bumps).enumerate() {
        let ideal = (m as f64).powf(-alpha * beta) * (z as f64).powf(dim as f64 - alpha * beta);
        worst_ratio = worst_ratio.max(s as f64 / ideal);
        for block in (k as u64 * per_scale)..((k as u64 + 1) * per_scale) {
            let mut origin = vec![0.0; dim];
            let mut rem = block;
            for o in origin.iter_mut().rev() {
                *o = (rem % m) as f64 * width;
                rem /= m;
            }
            fields.push(BumpGrid {
                origin,
                extent: width,
                cells: z,
                amplitude: d_phi * ((m * z) as f64).powf(-beta),
                beta,
                signs: signs[cursor..cursor + s].to_vec(),
            });
            cursor += s;
        }
    }
    let declared = DeclaredParams {
        alpha,
        beta,
        lipschitz,
        margin: Some(MarginEnvelope {
            delta0: 1.0,
            d0: (1.0 + dim as f64) * worst_ratio * d_phi.powf(-alpha),
        }),
    };
    half_baseline("multiscale", dim, fields, declared)
}

/// Single bump of height `D_phi / z` on `[0, 1/z)` with `D_phi = min(L/2, 1/4)`, `d = 1`.
pub fn make_static_failure_instance(z: u64, lipschitz: f64) -> Result<BanditInstance, InstanceError> {
    if z == 0 {
        return Err(InstanceError::InvalidParameter {
            name: "z",
            reason: "must be at least 1".into(),
        });
    }
    check_exponents(1.0, 1.0, lipschitz)?;
    let d_phi = (lipschitz / 2.0).min(0.25);
    let field = BumpGrid {
        origin: vec![0.0],
        extent: 1.0,
        cells: z,
        amplitude: d_phi / z as f64,
        beta: 1.0,
        signs: vec![1],
    };
    let declared = DeclaredParams {
        alpha: 1.0,
        beta: 1.0,
        lipschitz,
        margin: Some(MarginEnvelope {
            delta0: 1.0,
            d0: 1.0 / d_phi,
        }),
    };
    half_baseline("static_failure", 1, vec![field], declared)
}

/// The four-bump experiment instance on `[0,1]`: bumps of height 1/4 centred
/// at `(j - 1/2)/4`, declared `(alpha, beta, L) = (0.2, 1, 2)`.
pub fn make_experiment_instance(signs: &Signs) -> Result<BanditInstance, InstanceError> {
    let signs = signs.resolve(4)?;
    let field = BumpGrid {
        origin: vec![0.0],
        extent: 1.0,
        cells: 4,
        amplitude: 0.25,
        beta: 1.0,
        signs,
    };
    let alpha = 0.2;
    let declared = DeclaredParams {
        alpha,
        beta: 1.0,
        lipschitz: 2.0,
        margin: Some(MarginEnvelope {
            delta0: 0.25,
            d0: 4f64.powf(alpha),
        }),
    };
    half_baseline("experiment", 1, vec![field], declared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Arm;

    fn all_plus() -> Signs {
        Signs::Explicit(vec![1, 1, 1, 1])
    }

    #[test]
    fn experiment_instance_values() {
        let inst = make_experiment_instance(&all_plus()).unwrap();
        assert!((inst.mean(Arm::Plus, &[0.125]) - 0.75).abs() < 1e-15);
        assert_eq!(inst.mean(Arm::Plus, &[0.0]), 0.5);
        assert_eq!(inst.mean(Arm::Minus, &[0.4]), 0.5);
        let inst = make_experiment_instance(&Signs::Explicit(vec![1, -1, 1, 1])).unwrap();
        let (arm, gap) = inst.optimal_arm_and_gap(&[0.375]);
        assert_eq!(arm, Arm::Minus);
        assert!((gap - 0.25).abs() < 1e-15);
        assert!(make_experiment_instance(&Signs::Explicit(vec![1, 1])).is_err());
    }

    #[test]
    fn cz_bump_count_and_height() {
        assert_eq!(cz_bump_count(4, 0.2, 1.0, 1), 4);
        let inst = make_cz_instance(4, 0.2, 1.0, 1.0, 1, &all_plus()).unwrap();
        assert!((inst.mean(Arm::Plus, &[0.125]) - 0.5625).abs() < 1e-15);
        let inst = make_cz_instance(8, 1.0, 1.0, 1.0, 1, &Signs::Explicit(vec![1])).unwrap();
        assert_eq!(inst.mean(Arm::Plus, &[0.25]), 0.5);
    }

    #[test]
    fn cz_rejects_bad_inputs() {
        assert!(matches!(
            make_cz_instance(4, 2.0, 1.0, 1.0, 1, &Signs::Seed(1)),
            Err(InstanceError::MarginTooLarge(_))
        ));
        assert!(matches!(
            make_cz_instance(4, 0.2, 1.0, 1.0, 1, &Signs::Explicit(vec![1])),
            Err(InstanceError::SignLength { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn cz_only_first_cells_carry_bumps() {
        let inst = make_cz_instance(10, 1.0, 1.0, 1.0, 1, &Signs::Seed(3)).unwrap();
        assert_eq!(cz_bump_count(10, 1.0, 1.0, 1), 1);
        for k in 1..10 {
            let x = (k as f64 + 0.5) / 10.0;
            assert_eq!(inst.mean(Arm::Plus, &[x]), 0.5);
        }
        assert!((inst.mean(Arm::Plus, &[0.05]) - 0.5).abs() > 0.02);
    }

    #[test]
    fn seeded_signs_reproducible() {
        assert_eq!(rademacher(42, 64), rademacher(42, 64));
        assert_ne!(rademacher(42, 64), rademacher(43, 64));
    }

    #[test]
    fn static_failure_bump() {
        let inst = make_static_failure_instance(8, 2.0).unwrap();
        assert!((inst.mean(Arm::Plus, &[1.0 / 16.0]) - (0.5 + 0.25 / 8.0)).abs() < 1e-15);
        assert_eq!(inst.mean(Arm::Plus, &[0.125]), 0.5);
        assert_eq!(inst.mean(Arm::Plus, &[0.7]), 0.5);
    }

    #[test]
    fn multiscale_layout() {
        let spec = multiscale_spec(3, 1.0, 1.0, 1, 100_000).unwrap();
        let t1 = spec.b.floor() as u64;
        assert_eq!(spec.horizons[1], t1);
        let z2 = (36.0 * t1 as f64 * 9.0).powf(1.0 / 3.0).ceil() as u64;
        assert_eq!(spec.cells[1], z2);
        assert_eq!(spec.cells[0], (36.0f64 * 9.0).powf(1.0 / 3.0).ceil() as u64);
        assert_eq!(spec.total_signs, spec.bumps.iter().sum::<usize>());
    }

    #[test]
    fn multiscale_peak_heights() {
        let inst = make_multiscale_instance(2, 1.0, 1.0, 1.0, 1, 10_000, &Signs::Seed(5)).unwrap();
        let spec = multiscale_spec(2, 1.0, 1.0, 1, 10_000).unwrap();
        let z1 = spec.cells[0] as f64;
        let x = 0.5 / (2.0 * z1);
        let peak = 0.25 / (2.0 * z1);
        assert!(((inst.mean(Arm::Plus, &[x]) - 0.5).abs() - peak).abs() < 1e-12);
    }
}
