//! Coin degree of freedom: the two-level internal state that steers the
//! conditional shift, and the 2x2 unitaries tossed onto it.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Tolerance for the unitarity check on coin matrices.
pub const UNITARITY_TOL: f64 = 1e-12;

/// The two coin basis states. `R` moves the walker right, `L` left; in the
/// photonic realization they correspond to horizontal and vertical
/// polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoinLabel {
    R,
    L,
}

impl CoinLabel {
    /// Basis vector for this label: `R -> (1, 0)`, `L -> (0, 1)`.
    pub fn basis_vector(self) -> (C64, C64) {
        match self {
            CoinLabel::R => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            CoinLabel::L => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        }
    }
}

impl std::fmt::Display for CoinLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoinLabel::R => write!(f, "R"),
            CoinLabel::L => write!(f, "L"),
        }
    }
}

/// A single-site coin operation: a 2x2 complex unitary applied at every
/// occupied position before the shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinSpec {
    matrix: [[C64; 2]; 2],
}

impl CoinSpec {
    /// Build a coin from an explicit matrix, checking unitarity to
    /// [`UNITARITY_TOL`].
    pub fn new(matrix: [[C64; 2]; 2]) -> Result<Self> {
        let coin = CoinSpec { matrix };
        let dev = coin.unitarity_deviation();
        if dev < UNITARITY_TOL {
            Ok(coin)
        } else {
            Err(Error::NotUnitary { deviation: dev })
        }
    }

    /// Max entrywise deviation of `C\u{2020}C` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let m = &self.matrix;
        let mut dev: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                // (C^dagger C)_{ij} = sum_k conj(m[k][i]) m[k][j]
                let mut entry = C64::new(0.0, 0.0);
                for row in m.iter() {
                    entry += row[i].conj() * row[j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((entry - target).norm());
            }
        }
        dev
    }

    /// The underlying matrix, row major.
    pub fn matrix(&self) -> &[[C64; 2]; 2] {
        &self.matrix
    }

    /// Apply the coin to a single amplitude pair.
    #[inline]
    pub fn apply(&self, pair: (C64, C64)) -> (C64, C64) {
        let m = &self.matrix;
        (
            m[0][0] * pair.0 + m[0][1] * pair.1,
            m[1][0] * pair.0 + m[1][1] * pair.1,
        )
    }

    pub fn determinant(&self) -> C64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// The balanced Hadamard coin `(1/sqrt 2) [[1, 1], [1, -1]]`.
pub fn hadamard_coin() -> CoinSpec {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    CoinSpec {
        matrix: [[h, h], [h, -h]],
    }
}

/// The trivial coin: leaves the internal state untouched, yielding ballistic
/// motion.
pub fn identity_coin() -> CoinSpec {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    CoinSpec {
        matrix: [[one, zero], [zero, one]],
    }
}

/// Coin realized by a half-wave plate at angle `theta` (radians):
/// `[[cos 2theta, sin 2theta], [sin 2theta, -cos 2theta]]`.
///
/// `theta = pi/8` reproduces the Hadamard coin; small angle offsets model the
/// plate-setting error of the physical coin.
pub fn hwp_coin(theta: f64) -> CoinSpec {
    let c = C64::new((2.0 * theta).cos(), 0.0);
    let s = C64::new((2.0 * theta).sin(), 0.0);
    CoinSpec {
        matrix: [[c, s], [s, -c]],
    }
}

/// Recover the plate angle from a coin in the half-wave-plate family.
///
/// Returns the angle in `(-pi/2, pi/2]` such that `hwp_coin(angle)` matches
/// the given coin entrywise to 1e-9, or [`Error::NotHwpCoin`] if the matrix
/// is not of that form.
pub fn hwp_angle_of(coin: &CoinSpec) -> Result<f64> {
    let m = coin.matrix();
    let theta = 0.5 * m[0][1].re.atan2(m[0][0].re);
    let candidate = hwp_coin(theta);
    let dev = max_entry_distance(coin, &candidate);
    if dev < 1e-9 {
        Ok(theta)
    } else {
        Err(Error::NotHwpCoin)
    }
}

/// Max entrywise modulus of the difference between two coins.
pub fn max_entry_distance(a: &CoinSpec, b: &CoinSpec) -> f64 {
    let (ma, mb) = (a.matrix(), b.matrix());
    let mut dev: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            dev = dev.max((ma[i][j] - mb[i][j]).norm());
        }
    }
    dev
}
