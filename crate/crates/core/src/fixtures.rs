//! Reference cocycles with known exponents.

use crate::base::BaseSystem;
use crate::cocycle::{CocycleHandle, Generator, DEFAULT_STEP};
use crate::expr::Expr;
use crate::linalg::{max_real_eigenvalue, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Golden-mean rotation number `(√5 − 1)/2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn m2(rows: [f64; 4]) -> Matrix {
    Matrix::from_row_slice(2, 2, &rows)
}

pub fn bernoulli() -> BaseSystem {
    BaseSystem::full_shift(vec![0.5, 0.5]).expect("valid weights")
}

fn over_pair(base: BaseSystem, a0: Matrix, a1: Matrix) -> CocycleHandle {
    let g = Generator::locally_constant(2, 1, vec![a0, a1]).expect("valid generator");
    CocycleHandle::discrete(base, g).expect("valid cocycle")
}

/// `a·Id` in dimension one over the Bernoulli(½,½) shift; `λ = log|a|`.
pub fn constant_scalar(a: f64) -> CocycleHandle {
    CocycleHandle::discrete(bernoulli(), Generator::scalar_identity(a, 1)).expect("valid cocycle")
}

/// `diag(0.9, 0.2)` on symbol 0 and `diag(0.3, 0.8)` on symbol 1;
/// `λ = max(½ log 0.27, ½ log 0.16)`.
pub fn diagonal_bernoulli() -> CocycleHandle {
    over_pair(bernoulli(), m2([0.9, 0.0, 0.0, 0.2]), m2([0.3, 0.0, 0.0, 0.8]))
}

pub fn diagonal_bernoulli_exponent() -> f64 {
    0.5 * (0.9f64 * 0.3).ln().max((0.2f64 * 0.8).ln())
}

/// The same diagonal pair over the doubling map's binary digits.
pub fn diagonal_doubling() -> CocycleHandle {
    over_pair(BaseSystem::doubling(), m2([0.9, 0.0, 0.0, 0.2]), m2([0.3, 0.0, 0.0, 0.8]))
}

/// Two shears with norm below one.
pub fn contractive_pair() -> CocycleHandle {
    over_pair(bernoulli(), m2([0.5, 0.4, 0.0, 0.5]), m2([0.5, 0.0, 0.4, 0.5]))
}

/// A stable shear paired with `2·Id`.
pub fn expanding_pair() -> CocycleHandle {
    over_pair(bernoulli(), m2([0.5, 0.4, 0.0, 0.5]), m2([2.0, 0.0, 0.0, 2.0]))
}

/// The contractive pair over the golden-mean shift (no `11`).
pub fn golden_mean_pair() -> CocycleHandle {
    let base = BaseSystem::sft(vec![vec![true, true], vec![true, false]], None).expect("valid shift");
    over_pair(base, m2([0.5, 0.4, 0.0, 0.5]), m2([1.1, 0.0, 0.3, 0.6]))
}

/// `[[0, 1], [0, 0]]`: every product of length two vanishes.
pub fn nilpotent() -> CocycleHandle {
    let g = Generator::constant(m2([0.0, 1.0, 0.0, 0.0])).expect("square");
    CocycleHandle::discrete(bernoulli(), g).expect("valid cocycle")
}

/// `exp(−1 + ½cos 2πx)` over the golden rotation; `λ = −1`.
pub fn rotation_scalar() -> CocycleHandle {
    let base = BaseSystem::rotation(GOLDEN).expect("valid angle");
    let g = Generator::closed_form(1, vec![Expr::parse("exp(-1 + 0.5*cos(2*pi*x))").expect("valid")]).expect("dim 1");
    CocycleHandle::discrete(base, g).expect("valid cocycle")
}

/// Scalar field `g` over the unit suspension of the golden rotation, where
/// `x` is the base coordinate and `s` the height.
pub fn flow_scalar(expr: &str) -> CocycleHandle {
    let base = BaseSystem::promote(BaseSystem::rotation(GOLDEN).expect("valid angle")).expect("unit roof");
    let g = Generator::closed_form(1, vec![Expr::parse(expr).expect("valid expression")]).expect("dim 1");
    CocycleHandle::continuous(base, g, DEFAULT_STEP).expect("valid cocycle")
}

/// `g ≡ −1`.
pub fn flow_decay() -> CocycleHandle {
    flow_scalar("-1")
}

/// `g = −1 + sin 2π(x + αs)` along the linear flow; `λ = −1`.
pub fn flow_sine() -> CocycleHandle {
    flow_scalar(&format!("-1 + sin(2*pi*(x + {GOLDEN:?}*s))"))
}

/// `g = −1 + ½cos 2π(x + αs)`; `λ = −1`.
pub fn flow_cosine() -> CocycleHandle {
    flow_scalar(&format!("-1 + 0.5*cos(2*pi*(x + {GOLDEN:?}*s))"))
}

/// A constant 2×2 field with spectral abscissa −½, drawn from `seed`.
pub fn flow_random_stable(seed: u64) -> CocycleHandle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit variance");
    let mut g = Matrix::from_fn(2, 2, |_, _| normal.sample(&mut rng));
    let shift = max_real_eigenvalue(&g) + 0.5;
    for i in 0..2 {
        g[(i, i)] -= shift;
    }
    let base = BaseSystem::promote(BaseSystem::rotation(GOLDEN).expect("valid angle")).expect("unit roof");
    CocycleHandle::continuous(base, Generator::constant(g).expect("square"), DEFAULT_STEP).expect("valid cocycle")
}

/// Every continuous-time fixture.
pub fn continuous_fixtures() -> Vec<(&'static str, CocycleHandle)> {
    vec![
        ("decay", flow_decay()),
        ("sine", flow_sine()),
        ("cosine", flow_cosine()),
        ("random-stable", flow_random_stable(3)),
    ]
}

/// Every locally-constant fixture over a subshift of finite type.
pub fn shift_fixtures() -> Vec<(&'static str, CocycleHandle)> {
    vec![
        ("constant", constant_scalar(0.5)),
        ("diagonal", diagonal_bernoulli()),
        ("contractive", contractive_pair()),
        ("expanding", expanding_pair()),
        ("golden-mean", golden_mean_pair()),
    ]
}
