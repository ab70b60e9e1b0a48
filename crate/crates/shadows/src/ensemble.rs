//! Single-qubit measurement ensembles.
//!
//! A snapshot applies u to each qubit and measures in the computational basis.
//! Everything downstream only needs the Bloch vector n of u†Zu, since
//! u†|s⟩⟨s|u = (𝟙 + (−1)^s n·σ)/2.
//!
//! Clifford ids are `4v + p` with u = V_v·P_p, where V runs over
//! (𝟙, H, S, HS, SH, HSH) and P over (𝟙, X, Y, Z). Haar ids are 32-bit keys;
//! the unitary of key `k` is the SU(2) element built from four standard normals
//! drawn from a ChaCha8 stream seeded with `HAAR_KEY_DOMAIN ^ k`.

use std::sync::OnceLock;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type Mat2 = Matrix2<Complex64>;

pub const CLIFFORD_SIZE: u32 = 24;
const HAAR_KEY_DOMAIN: u64 = 0x4b53_545f_4841_4152;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// The 24-element single-qubit Clifford group (default).
    Clifford,
    /// Local Haar-random unitaries, addressed by 32-bit keys.
    Haar,
}

impl Default for Ensemble {
    fn default() -> Self {
        Ensemble::Clifford
    }
}

impl Ensemble {
    pub fn code(self) -> u8 {
        match self {
            Ensemble::Clifford => 0,
            Ensemble::Haar => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Ensemble::Clifford),
            1 => Some(Ensemble::Haar),
            _ => None,
        }
    }

    /// Whether `id` addresses an element of this ensemble.
    pub fn contains(self, id: u32) -> bool {
        match self {
            Ensemble::Clifford => id < CLIFFORD_SIZE,
            Ensemble::Haar => true,
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> u32 {
        match self {
            Ensemble::Clifford => rng.random_range(0..CLIFFORD_SIZE),
            Ensemble::Haar => rng.next_u32(),
        }
    }

    pub fn unitary(self, id: u32) -> Mat2 {
        match self {
            Ensemble::Clifford => clifford_table()[id as usize].unitary,
            Ensemble::Haar => haar_unitary(id),
        }
    }

    /// Bloch vector of u†Zu.
    pub fn axis(self, id: u32) -> [f64; 3] {
        match self {
            Ensemble::Clifford => clifford_table()[id as usize].axis,
            Ensemble::Haar => bloch_of_measured_z(&haar_unitary(id)),
        }
    }
}

pub fn pauli2(code: usize) -> Mat2 {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match code {
        0 => Mat2::new(l, o, o, l),
        1 => Mat2::new(o, l, l, o),
        2 => Mat2::new(o, -i, i, o),
        _ => Mat2::new(l, o, o, -l),
    }
}

/// Components ½tr(σ_μ M), μ = I, X, Y, Z, of a Hermitian 2×2 matrix.
pub fn pauli_components(m: &Mat2) -> [f64; 4] {
    [
        0.5 * (m[(0, 0)] + m[(1, 1)]).re,
        0.5 * (m[(0, 1)] + m[(1, 0)]).re,
        0.5 * (m[(1, 0)] - m[(0, 1)]).im,
        0.5 * (m[(0, 0)] - m[(1, 1)]).re,
    ]
}

fn bloch_of_measured_z(u: &Mat2) -> [f64; 3] {
    let m = u.adjoint() * pauli2(3) * u;
    let c = pauli_components(&m);
    [c[1], c[2], c[3]]
}

struct CliffordElement {
    unitary: Mat2,
    axis: [f64; 3],
}

fn clifford_table() -> &'static [CliffordElement] {
    static TABLE: OnceLock<Vec<CliffordElement>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let h = Mat2::new(
            Complex64::new(s2, 0.0),
            Complex64::new(s2, 0.0),
            Complex64::new(s2, 0.0),
            Complex64::new(-s2, 0.0),
        );
        let s = Mat2::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 1.0),
        );
        let id = pauli2(0);
        let cosets = [id, h, s, h * s, s * h, h * s * h];
        let mut out = Vec::with_capacity(CLIFFORD_SIZE as usize);
        for v in cosets {
            for p in 0..4 {
                let unitary = v * pauli2(p);
                // Clifford axes are signed unit vectors; drop rounding noise.
                let axis = bloch_of_measured_z(&unitary).map(f64::round);
                out.push(CliffordElement { unitary, axis });
            }
        }
        out
    })
}

fn haar_unitary(key: u32) -> Mat2 {
    let mut rng = ChaCha8Rng::seed_from_u64(HAAR_KEY_DOMAIN ^ key as u64);
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [a, b, c, d] = q.map(|v| v / norm);
    Mat2::new(Complex64::new(a, b), Complex64::new(c, d), Complex64::new(-c, d), Complex64::new(a, -b))
}

/// Index 0–2 of the measured Pauli axis and its sign, for Clifford ids.
pub(crate) fn clifford_axis(id: u32) -> (usize, bool) {
    let axis = clifford_table()[id as usize].axis;
    let a = (0..3).find(|&i| axis[i] != 0.0).expect("Clifford axis is a signed unit vector");
    (a, axis[a] < 0.0)
}
