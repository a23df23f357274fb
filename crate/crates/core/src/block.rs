//! Tiling of N×N computations onto the 4×4 loop.
//!
//! Operands are padded to a multiple of the tile size, cut into 4×4 tiles
//! and combined with ordinary block arithmetic. Every tile-level add,
//! multiply and inverse runs on the loop engine; only padding, scaling by
//! powers of two and bookkeeping happen digitally.

use rayon::prelude::*;

use crate::engine::{invert_matrix, loop_add, loop_multiply, LoopConfig};
use crate::error::{Error, Result};
use crate::hardware::TILE;
use crate::linalg::{dense_invert, matadd, matmul, Matrix, Sign};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Zeros outside the operand (add/multiply operands).
    Zero,
    /// Ones on the uncovered diagonal, so inverses survive padding.
    Identity,
}

/// Smallest multiple of the tile size that holds `n` (at least one tile).
pub fn padded_dim(n: usize) -> usize {
    n.div_ceil(TILE).max(1) * TILE
}

/// Embeds `a` top-left in a square matrix whose side is a tile multiple.
pub fn pad(a: &Matrix, mode: PadMode) -> Matrix {
    let n = padded_dim(a.rows().max(a.cols()));
    if a.shape() == (n, n) {
        return a.clone();
    }
    let mut out = Matrix::zeros(n, n);
    out.set_block(0, 0, a);
    if mode == PadMode::Identity {
        for i in 0..n {
            if i >= a.rows() || i >= a.cols() {
                out[(i, i)] = 1.0;
            }
        }
    }
    out
}

/// A padded square matrix cut into 4×4 tiles, row-major block order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    n_orig: usize,
    per_side: usize,
    tiles: Vec<Matrix>,
}

impl TileGrid {
    pub fn n_orig(&self) -> usize {
        self.n_orig
    }

    pub fn n_padded(&self) -> usize {
        self.per_side * TILE
    }

    /// Tiles along one side.
    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn tile(&self, bi: usize, bj: usize) -> &Matrix {
        &self.tiles[bi * self.per_side + bj]
    }

    pub fn tiles(&self) -> &[Matrix] {
        &self.tiles
    }

    fn from_tiles(n_orig: usize, per_side: usize, tiles: Vec<Matrix>) -> Self {
        debug_assert_eq!(tiles.len(), per_side * per_side);
        Self {
            n_orig,
            per_side,
            tiles,
        }
    }

    fn scale(&self, c: f64) -> Self {
        Self::from_tiles(
            self.n_orig,
            self.per_side,
            self.tiles.iter().map(|t| t.scale(c)).collect(),
        )
    }

    fn max_abs(&self) -> f64 {
        self.tiles.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }

    /// Original-size top-left block of the assembled matrix.
    pub fn unpadded(&self) -> Matrix {
        assemble(self).submatrix(0, 0, self.n_orig, self.n_orig)
    }
}

pub fn partition(a: &Matrix) -> Result<TileGrid> {
    let (r, c) = a.shape();
    if r != c || r % TILE != 0 {
        return Err(Error::DimensionNotTileable { rows: r, cols: c });
    }
    let per_side = r / TILE;
    let mut tiles = Vec::with_capacity(per_side * per_side);
    for bi in 0..per_side {
        for bj in 0..per_side {
            tiles.push(a.submatrix(bi * TILE, bj * TILE, TILE, TILE));
        }
    }
    Ok(TileGrid::from_tiles(r, per_side, tiles))
}

/// Pads `a` and partitions it, remembering the original side length.
pub fn pad_and_partition(a: &Matrix, mode: PadMode) -> TileGrid {
    let mut grid = partition(&pad(a, mode)).expect("padded dims are tileable");
    grid.n_orig = a.rows().max(a.cols());
    grid
}

pub fn assemble(grid: &TileGrid) -> Matrix {
    let n = grid.n_padded();
    let mut out = Matrix::zeros(n, n);
    for bi in 0..grid.per_side {
        for bj in 0..grid.per_side {
            out.set_block(bi * TILE, bj * TILE, grid.tile(bi, bj));
        }
    }
    out
}

/// Smallest `e ≥ 0` with `max_abs · 2⁻ᵉ ≤ 1`.
pub fn encoding_exponent(max_abs: f64) -> i32 {
    let mut e = 0;
    let mut m = max_abs;
    while m > 1.0 {
        m *= 0.5;
        e += 1;
    }
    e
}

fn tile_id(bi: usize, bj: usize, per_side: usize) -> u64 {
    (bi * per_side + bj) as u64
}

fn check_same_size(a: &TileGrid, b: &TileGrid, op: &'static str) -> Result<()> {
    if a.per_side != b.per_side {
        return Err(Error::ShapeMismatch {
            op,
            left: (a.n_padded(), a.n_padded()),
            right: (b.n_padded(), b.n_padded()),
        });
    }
    Ok(())
}

fn pow2(m: &Matrix, e: i32) -> Matrix {
    m.scale((e as f64).exp2())
}

/// `x + sign·y` for one tile pair, with `x` in the bank. Both operands are
/// scaled by the power of two that makes `x` encodable.
fn tile_add(
    x: &Matrix,
    y: &Matrix,
    sign: Sign,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<Matrix> {
    let e = encoding_exponent(x.max_abs());
    let bank = cfg.encode(&pow2(x, -e), key)?;
    Ok(pow2(&loop_add(&bank, &pow2(y, -e), sign, cfg, key)?, e))
}

pub fn block_add(
    a: &TileGrid,
    b: &TileGrid,
    sign: Sign,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<TileGrid> {
    check_same_size(a, b, "block_add")?;
    let e = encoding_exponent(a.max_abs());
    let down = (-e as f64).exp2();
    let (a_s, b_s) = (a.scale(down), b.scale(down));
    let per = a.per_side;
    let tiles = (0..per * per)
        .into_par_iter()
        .map(|t| {
            let (bi, bj) = (t / per, t % per);
            let tkey = key.child(tile_id(bi, bj, per));
            let bank = cfg
                .encode(a_s.tile(bi, bj), tkey)
                .map_err(|err| err.in_tile((bi, bj)))?;
            Ok(pow2(
                &loop_add(&bank, b_s.tile(bi, bj), sign, cfg, tkey)?,
                e,
            ))
        })
        .collect::<Vec<Result<Matrix>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(TileGrid::from_tiles(a.n_orig, per, tiles))
}

/// Block product. Tile products run on the loop with the left tile in the
/// bank; partial sums are accumulated with loop additions in ascending `k`.
pub fn block_multiply(
    a: &TileGrid,
    b: &TileGrid,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<TileGrid> {
    check_same_size(a, b, "block_multiply")?;
    let e = encoding_exponent(a.max_abs());
    let a_s = a.scale((-e as f64).exp2());
    let per = a.per_side;
    let tiles = (0..per * per)
        .into_par_iter()
        .map(|t| {
            let (bi, bj) = (t / per, t % per);
            let out_key = key.child(tile_id(bi, bj, per));
            let mut acc: Option<Matrix> = None;
            for k in 0..per {
                let pkey = out_key.child(2 * k as u64);
                let bank = cfg
                    .encode(a_s.tile(bi, k), pkey)
                    .map_err(|err| err.in_tile((bi, k)))?;
                let product = loop_multiply(&bank, b.tile(k, bj), cfg, pkey)?;
                acc = Some(match acc {
                    None => product,
                    Some(sum) => tile_add(
                        &sum,
                        &product,
                        Sign::Plus,
                        cfg,
                        out_key.child(2 * k as u64 + 1),
                    )?,
                });
            }
            Ok(pow2(&acc.expect("at least one tile"), e))
        })
        .collect::<Vec<Result<Matrix>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(TileGrid::from_tiles(a.n_orig.max(b.n_orig), per, tiles))
}

/// Options for [`block_invert`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub loop_cfg: LoopConfig,
    /// Largest accepted `‖A·R − I‖_F`; `None` skips the check.
    pub verify_threshold: Option<f64>,
}

impl BlockConfig {
    pub fn new(loop_cfg: LoopConfig) -> Self {
        Self {
            loop_cfg,
            verify_threshold: Some(1e-4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockInversion {
    pub inverse: TileGrid,
    /// `‖A·R − I‖_F` of the padded operand.
    pub residual: f64,
    /// Circulations of every column solve of every 4×4 base inversion.
    pub circulations: Vec<usize>,
}

/// Inverse by recursive 2×2 Schur-complement splitting:
///
/// ```text
/// A = [A11 A12; A21 A22],  S = A22 − A21·A11⁻¹·A12
/// A⁻¹ = [A11⁻¹ + A11⁻¹A12·S⁻¹·A21A11⁻¹   −A11⁻¹A12·S⁻¹;
///        −S⁻¹·A21A11⁻¹                   S⁻¹]
/// ```
///
/// Base case is a single tile inverted on the loop. No block pivoting: a
/// singular leading block is an error.
pub fn block_invert(a: &TileGrid, cfg: &BlockConfig, key: StreamKey) -> Result<BlockInversion> {
    cfg.loop_cfg.validate()?;
    let dense = assemble(a);
    let mut circulations = Vec::new();
    let inv = invert_recursive(&dense, &cfg.loop_cfg, key, 0, &mut circulations)?;
    let n = dense.rows();
    let residual =
        matadd(&matmul(&dense, &inv)?, &Matrix::identity(n), Sign::Minus)?.frobenius_norm();
    if let Some(threshold) = cfg.verify_threshold {
        if residual.is_nan() || residual > threshold {
            return Err(Error::VerificationFailed {
                residual,
                threshold,
            });
        }
    }
    let mut inverse = partition(&inv)?;
    inverse.n_orig = a.n_orig;
    Ok(BlockInversion {
        inverse,
        residual,
        circulations,
    })
}

fn invert_recursive(
    a: &Matrix,
    cfg: &LoopConfig,
    key: StreamKey,
    level: usize,
    circulations: &mut Vec<usize>,
) -> Result<Matrix> {
    let per = a.rows() / TILE;
    if per == 1 {
        if dense_invert(a).is_err() {
            return Err(Error::SingularLeadingBlock { level });
        }
        let inv = invert_matrix(a, cfg, key)?;
        circulations.extend(inv.traces.iter().map(|t| t.circulations_used));
        return Ok(inv.inverse);
    }
    let h = (per / 2) * TILE;
    let rest = a.rows() - h;
    let a11 = a.submatrix(0, 0, h, h);
    if dense_invert(&a11).is_err() {
        return Err(Error::SingularLeadingBlock { level });
    }
    let a12 = a.submatrix(0, h, h, rest);
    let a21 = a.submatrix(h, 0, rest, h);
    let a22 = a.submatrix(h, h, rest, rest);

    let a11_inv = invert_recursive(&a11, cfg, key.child(1), level + 1, circulations)?;
    let mul = |x: &Matrix, y: &Matrix, id: u64| rect_multiply(x, y, cfg, key.child(id));
    let t = mul(&a21, &a11_inv, 10)?; // A21·A11⁻¹
    let u = mul(&a11_inv, &a12, 11)?; // A11⁻¹·A12
    let t_a12 = mul(&t, &a12, 12)?;
    let s = rect_add(&a22, &t_a12, Sign::Minus, cfg, key.child(13))?;
    let s_inv = invert_recursive(&s, cfg, key.child(2), level + 1, circulations)?;
    let b12 = mul(&u, &s_inv, 14)?.scale(-1.0);
    let b21 = mul(&s_inv, &t, 15)?.scale(-1.0);
    let b12_t = mul(&b12, &t, 16)?;
    let b11 = rect_add(&a11_inv, &b12_t, Sign::Minus, cfg, key.child(17))?;

    let mut out = Matrix::zeros(a.rows(), a.rows());
    out.set_block(0, 0, &b11);
    out.set_block(0, h, &b12);
    out.set_block(h, 0, &b21);
    out.set_block(h, h, &s_inv);
    Ok(out)
}

/// Product of tile-aligned matrices through [`block_multiply`]. The
/// off-diagonal blocks are rectangular when the tile count is odd, so both
/// operands are zero-padded to a common square grid.
fn rect_multiply(x: &Matrix, y: &Matrix, cfg: &LoopConfig, key: StreamKey) -> Result<Matrix> {
    let n = x.rows().max(x.cols()).max(y.cols());
    let (xp, yp) = (pad_to(x, n), pad_to(y, n));
    let prod = block_multiply(&partition(&xp)?, &partition(&yp)?, cfg, key)?;
    Ok(assemble(&prod).submatrix(0, 0, x.rows(), y.cols()))
}

fn rect_add(
    x: &Matrix,
    y: &Matrix,
    sign: Sign,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<Matrix> {
    let sum = block_add(&partition(x)?, &partition(y)?, sign, cfg, key)?;
    Ok(assemble(&sum))
}

fn pad_to(m: &Matrix, n: usize) -> Matrix {
    if m.shape() == (n, n) {
        return m.clone();
    }
    let mut out = Matrix::zeros(n, n);
    out.set_block(0, 0, m);
    out
}
