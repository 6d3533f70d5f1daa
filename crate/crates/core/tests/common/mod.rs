#![allow(dead_code)]

use entcert::hilbert::{pauli, ComplexMatrix, HermitianOperator};
use entcert::inequalities::{ChshConfig, MeasurementSetting};
use rand::Rng;

/// r·(n̂·σ) with n̂ uniform on the sphere and r in [0, 1].
pub fn random_setting<R: Rng + ?Sized>(rng: &mut R) -> MeasurementSetting {
    let (z, phi): (f64, f64) = (rng.random_range(-1.0..=1.0), rng.random_range(0.0..std::f64::consts::TAU));
    let s = (1.0 - z * z).sqrt();
    let r: f64 = if rng.random_bool(0.5) { 1.0 } else { rng.random() };
    let m: ComplexMatrix = &(&pauli::sigma_x().scale(r * s * phi.cos()) + &pauli::sigma_y().scale(r * s * phi.sin()))
        + &pauli::sigma_z().scale(r * z);
    MeasurementSetting::new(HermitianOperator::new(m).unwrap()).unwrap()
}

pub fn random_config<R: Rng + ?Sized>(rng: &mut R) -> ChshConfig {
    ChshConfig {
        a: random_setting(rng),
        a_prime: random_setting(rng),
        b: random_setting(rng),
        b_prime: random_setting(rng),
    }
}
