//! Built-in coefficient, kernel and source functions that equation configs
//! can name.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Named1 {
    Zero,
    One,
    Identity,
    Sin,
    Cos,
    Exp,
    SinPi,
}

/// Function of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fn1 {
    Named {
        name: Named1,
    },
    Constant {
        value: f64,
    },
    /// `Σ coeffs[i]·xⁱ`.
    Poly {
        coeffs: Vec<f64>,
    },
}

impl Fn1 {
    pub fn constant(value: f64) -> Self {
        Fn1::Constant { value }
    }

    pub fn named(name: Named1) -> Self {
        Fn1::Named { name }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Fn1::Named { name } => match name {
                Named1::Zero => 0.0,
                Named1::One => 1.0,
                Named1::Identity => x,
                Named1::Sin => x.sin(),
                Named1::Cos => x.cos(),
                Named1::Exp => x.exp(),
                Named1::SinPi => (PI * x).sin(),
            },
            Fn1::Constant { value } => *value,
            Fn1::Poly { coeffs } => horner(coeffs, x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Named2 {
    Zero,
    One,
    /// `sin(πx)·sin(πy)`
    SinPiProduct,
    /// `exp(−|x − y|)`
    ExpNegAbsDiff,
}

/// Function of two variables (integral kernels, Poisson sources).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fn2 {
    Named {
        name: Named2,
    },
    Constant {
        value: f64,
    },
    /// `scale · p(x) · q(y)` with polynomial coefficient lists.
    SeparablePoly {
        #[serde(default = "one")]
        scale: f64,
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Fn2 {
    pub fn named(name: Named2) -> Self {
        Fn2::Named { name }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Fn2::Named { name } => match name {
                Named2::Zero => 0.0,
                Named2::One => 1.0,
                Named2::SinPiProduct => (PI * x).sin() * (PI * y).sin(),
                Named2::ExpNegAbsDiff => (-(x - y).abs()).exp(),
            },
            Fn2::Constant { value } => *value,
            Fn2::SeparablePoly {
                scale,
                x: px,
                y: py,
            } => scale * horner(px, x) * horner(py, y),
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials() {
        let p = Fn1::Poly {
            coeffs: vec![1.0, -2.0, 3.0],
        };
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(Fn1::Poly { coeffs: vec![] }.eval(3.0), 0.0);
        let k = Fn2::SeparablePoly {
            scale: 0.3,
            x: vec![0.0, 1.0],
            y: vec![0.0, 1.0],
        };
        assert!((k.eval(0.5, -0.5) + 0.075).abs() < 1e-15);
    }

    #[test]
    fn config_syntax() {
        let f: Fn1 = serde_json::from_str(r#"{"kind": "named", "name": "sin_pi"}"#).unwrap();
        assert!((f.eval(0.5) - 1.0).abs() < 1e-15);
        let g: Fn2 =
            serde_json::from_str(r#"{"kind": "separable_poly", "x": [0, 1], "y": [0, 1]}"#)
                .unwrap();
        assert_eq!(g.eval(2.0, 3.0), 6.0);
        let c: Fn1 = serde_json::from_str(r#"{"kind": "constant", "value": 2.5}"#).unwrap();
        assert_eq!(c.eval(9.0), 2.5);
        assert!(serde_json::from_str::<Fn1>(r#"{"kind": "named", "name": "tan"}"#).is_err());
    }
}
