//! Monomials and posynomials over the normalized power variables.

/// Number of power variables: four slot powers and four split fractions.
pub const NVARS: usize = 8;

/// Variable indices.
pub mod var {
    pub const P1_1: usize = 0;
    pub const P1_2: usize = 1;
    pub const P2_1: usize = 2;
    pub const P2_2: usize = 3;
    pub const P11: usize = 4;
    pub const P12: usize = 5;
    pub const P21: usize = 6;
    pub const P22: usize = 7;
}

/// `coef · Π pⱼ^{exps[j]}` with `coef > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exps: [i8; NVARS],
}

impl Monomial {
    pub fn constant(coef: f64) -> Self {
        Self {
            coef,
            exps: [0; NVARS],
        }
    }

    /// `coef · Π p_v` over the listed variables.
    pub fn product(coef: f64, vars: &[usize]) -> Self {
        let mut m = Self::constant(coef);
        for &v in vars {
            m.exps[v] += 1;
        }
        m
    }

    pub fn div(&self, other: &Monomial) -> Monomial {
        let mut exps = self.exps;
        for (e, o) in exps.iter_mut().zip(other.exps) {
            *e -= o;
        }
        Monomial {
            coef: self.coef / other.coef,
            exps,
        }
    }

    pub fn eval(&self, p: &[f64; NVARS]) -> f64 {
        self.exps
            .iter()
            .zip(p)
            .filter(|(e, _)| **e != 0)
            .fold(self.coef, |acc, (&e, &x)| acc * x.powi(i32::from(e)))
    }
}

/// Sum of monomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn eval(&self, p: &[f64; NVARS]) -> f64 {
        self.terms.iter().map(|m| m.eval(p)).sum()
    }

    /// `(Σ numer + 1) / denom`.
    pub fn ratio_plus_one(numer: &[Monomial], denom: &Monomial) -> Self {
        let mut terms: Vec<Monomial> = numer.iter().map(|m| m.div(denom)).collect();
        terms.push(Monomial::constant(1.0).div(denom));
        Self { terms }
    }
}
