use super::{
    check_disjoint, Algorithm, Buffer, Dims, KernelInvocation, KernelKind, MatrixLayout, Operand,
    Region, Shape, Trace, TraceError,
};

const ALIGN: u64 = 64;

/// Where the algorithm's buffers live. Unset buffers are packed after the
/// preceding one (order A, tau, W) at 64-byte aligned offsets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AddressMap {
    pub a: Option<u64>,
    pub tau: Option<u64>,
    pub w: Option<u64>,
}

impl AddressMap {
    pub fn packed() -> Self {
        Self::default()
    }

    pub fn explicit(a: u64, tau: u64, w: u64) -> Self {
        Self {
            a: Some(a),
            tau: Some(tau),
            w: Some(w),
        }
    }

    fn base_for(&self, buffer: Buffer) -> Option<u64> {
        match buffer {
            Buffer::A => self.a,
            Buffer::Tau => self.tau,
            Buffer::W => self.w,
        }
    }

    /// Places dense `rows×cols` matrices for each buffer and checks that they
    /// do not overlap.
    fn place(&self, shapes: &[(Buffer, u64, u64)]) -> Result<Vec<MatrixLayout>, TraceError> {
        let mut next = 0u64;
        let mut out = Vec::with_capacity(shapes.len());
        for &(buffer, rows, cols) in shapes {
            let base = self.base_for(buffer).unwrap_or(next);
            let layout = MatrixLayout::dense(buffer, base, rows, cols);
            next = next.max(layout.end().div_ceil(ALIGN) * ALIGN);
            out.push(layout);
        }
        check_disjoint(&out)?;
        Ok(out)
    }
}

/// Which region the `gemm_NT` trailing update reads as its second input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GemmNtInput {
    /// The transposed copy held in the workspace (what the kernel touches).
    #[default]
    W2,
    /// The `A12` block of the matrix itself.
    A12,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceOptions {
    pub gemm_nt_input: GemmNtInput,
}

fn check_blocking(n: u64, b: u64) -> Result<(), TraceError> {
    if n == 0 || b == 0 || b > n {
        return Err(TraceError::InvalidBlocking { n, b });
    }
    Ok(())
}

struct Emitter {
    invocations: Vec<KernelInvocation>,
}

impl Emitter {
    fn new() -> Self {
        Self {
            invocations: Vec::new(),
        }
    }

    fn emit(
        &mut self,
        step: usize,
        kind: KernelKind,
        variant: &str,
        dims: Dims,
        operands: Vec<Operand>,
    ) {
        let index = self.invocations.len();
        self.invocations.push(KernelInvocation {
            index,
            step,
            kind,
            variant: variant.to_string(),
            dims,
            operands,
        });
    }
}

pub fn generate_trace(
    algorithm: Algorithm,
    n: u64,
    b: u64,
    map: &AddressMap,
    options: &TraceOptions,
) -> Result<Trace, TraceError> {
    match algorithm {
        Algorithm::Geqrf => generate_geqrf_trace_with(n, b, map, options),
        Algorithm::Potrf => generate_potrf_trace(n, b, map),
        Algorithm::Trtri => generate_trtri_trace(n, b, map),
    }
}

pub fn generate_geqrf_trace(n: u64, b: u64, map: &AddressMap) -> Result<Trace, TraceError> {
    generate_geqrf_trace_with(n, b, map, &TraceOptions::default())
}

/// Blocked Householder QR: per step geqr2, larft, `b` copies forming
/// `W2 = A12^T`, then the four level-3 updates of the trailing matrix.
pub fn generate_geqrf_trace_with(
    n: u64,
    b: u64,
    map: &AddressMap,
    options: &TraceOptions,
) -> Result<Trace, TraceError> {
    check_blocking(n, b)?;
    let layouts = map.place(&[(Buffer::A, n, n), (Buffer::Tau, n, 1), (Buffer::W, n, b)])?;
    let (a, tau, w) = (layouts[0], layouts[1], layouts[2]);
    let mut out = Emitter::new();

    let mut j = 0;
    let mut step = 0;
    while n - j > b {
        let rest = n - j - b;
        let panel = Region::new(a, j, j, n - j, b, Shape::Full);
        let a11_lower = Region::new(a, j, j, b, b, Shape::LowerTriangular);
        let a21 = Region::new(a, j + b, j, rest, b, Shape::Full);
        let a12 = Region::new(a, j, j + b, b, rest, Shape::Full);
        let a22 = Region::new(a, j + b, j + b, rest, rest, Shape::Full);
        let tau1 = Region::new(tau, j, 0, b, 1, Shape::Full);
        let w1_upper = Region::new(w, 0, 0, b, b, Shape::UpperTriangular);
        let w2 = Region::new(w, b, 0, rest, b, Shape::Full);

        out.emit(
            step,
            KernelKind::Geqr2,
            "",
            Dims::mn(n - j, b),
            vec![Operand::inout(panel), Operand::output(tau1)],
        );
        out.emit(
            step,
            KernelKind::Larft,
            "",
            Dims::mn(n - j, b),
            vec![
                Operand::input(panel),
                Operand::input(tau1),
                Operand::output(w1_upper),
            ],
        );
        for i in 0..b {
            // row i of A12 becomes column i of W2
            let row = Region::new(a, j + i, j + b, 1, rest, Shape::Full);
            let col = Region::new(w, b, i, rest, 1, Shape::Full);
            out.emit(
                step,
                KernelKind::Copy,
                "",
                Dims::mn(rest, 1),
                vec![Operand::input(row), Operand::output(col)],
            );
        }
        out.emit(
            step,
            KernelKind::Trmm,
            "RLNU",
            Dims::mn(rest, b),
            vec![Operand::input(a11_lower), Operand::inout(w2)],
        );
        out.emit(
            step,
            KernelKind::Gemm,
            "TN",
            Dims::mnk(rest, b, rest),
            vec![Operand::input(a22), Operand::input(a21), Operand::inout(w2)],
        );
        out.emit(
            step,
            KernelKind::Trmm,
            "RUNN",
            Dims::mn(rest, b),
            vec![Operand::input(w1_upper), Operand::inout(w2)],
        );
        let nt_second = match options.gemm_nt_input {
            GemmNtInput::W2 => w2,
            GemmNtInput::A12 => a12,
        };
        out.emit(
            step,
            KernelKind::Gemm,
            "NT",
            Dims::mnk(rest, rest, b),
            vec![
                Operand::input(a21),
                Operand::input(nt_second),
                Operand::inout(a22),
            ],
        );
        out.emit(
            step,
            KernelKind::Trmm,
            "RLTU",
            Dims::mn(rest, b),
            vec![Operand::input(a11_lower), Operand::inout(w2)],
        );
        j += b;
        step += 1;
    }

    let width = n - j;
    out.emit(
        step,
        KernelKind::Geqr2,
        "",
        Dims::mn(width, width),
        vec![
            Operand::inout(Region::new(a, j, j, width, width, Shape::Full)),
            Operand::output(Region::new(tau, j, 0, width, 1, Shape::Full)),
        ],
    );

    Ok(Trace {
        algorithm: Algorithm::Geqrf,
        n,
        b,
        layouts,
        invocations: out.invocations,
    })
}

/// Right-looking blocked Cholesky of the upper triangle: per step potf2 on
/// the diagonal block, trsm on the block row, syrk on the trailing matrix.
pub fn generate_potrf_trace(n: u64, b: u64, map: &AddressMap) -> Result<Trace, TraceError> {
    check_blocking(n, b)?;
    let layouts = map.place(&[(Buffer::A, n, n)])?;
    let a = layouts[0];
    let mut out = Emitter::new();

    let mut j = 0;
    let mut step = 0;
    while j < n {
        let jb = b.min(n - j);
        let a11 = Region::new(a, j, j, jb, jb, Shape::UpperTriangular);
        out.emit(
            step,
            KernelKind::Potf2,
            "U",
            Dims::mn(jb, jb),
            vec![Operand::inout(a11)],
        );
        let rest = n - j - jb;
        if rest > 0 {
            let a12 = Region::new(a, j, j + jb, jb, rest, Shape::Full);
            let a22 = Region::new(a, j + jb, j + jb, rest, rest, Shape::UpperTriangular);
            out.emit(
                step,
                KernelKind::Trsm,
                "LUTN",
                Dims::mn(jb, rest),
                vec![Operand::input(a11), Operand::inout(a12)],
            );
            out.emit(
                step,
                KernelKind::Syrk,
                "UT",
                Dims::mnk(rest, rest, jb),
                vec![Operand::input(a12), Operand::inout(a22)],
            );
        }
        j += jb;
        step += 1;
    }

    Ok(Trace {
        algorithm: Algorithm::Potrf,
        n,
        b,
        layouts,
        invocations: out.invocations,
    })
}

/// Blocked inversion of a lower triangular matrix, walking the diagonal
/// forward: the block row left of each diagonal block is multiplied by the
/// already inverted leading triangle, scaled by the diagonal block, and the
/// diagonal block is then inverted in place.
pub fn generate_trtri_trace(n: u64, b: u64, map: &AddressMap) -> Result<Trace, TraceError> {
    check_blocking(n, b)?;
    let layouts = map.place(&[(Buffer::A, n, n)])?;
    let a = layouts[0];
    let mut out = Emitter::new();

    let mut j = 0;
    let mut step = 0;
    while j < n {
        let jb = b.min(n - j);
        let a11 = Region::new(a, j, j, jb, jb, Shape::LowerTriangular);
        if j > 0 {
            let leading = Region::new(a, 0, 0, j, j, Shape::LowerTriangular);
            let panel = Region::new(a, j, 0, jb, j, Shape::Full);
            out.emit(
                step,
                KernelKind::Trmm,
                "RLNN",
                Dims::mn(jb, j),
                vec![Operand::input(leading), Operand::inout(panel)],
            );
            out.emit(
                step,
                KernelKind::Trsm,
                "LLNN",
                Dims::mn(jb, j),
                vec![Operand::input(a11), Operand::inout(panel)],
            );
        }
        out.emit(
            step,
            KernelKind::Trti2,
            "LN",
            Dims::mn(jb, jb),
            vec![Operand::inout(a11)],
        );
        j += jb;
        step += 1;
    }

    Ok(Trace {
        algorithm: Algorithm::Trtri,
        n,
        b,
        layouts,
        invocations: out.invocations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lines::LineSet;
    use crate::trace::Role;
    use proptest::prelude::*;

    fn kinds(t: &Trace) -> Vec<String> {
        t.invocations.iter().map(|i| i.label()).collect()
    }

    #[test]
    fn geqrf_reference_scenario_counts() {
        let t = generate_geqrf_trace(1568, 32, &AddressMap::packed()).unwrap();
        assert_eq!(t.len(), 1873);
        assert_eq!(t.count_kind(KernelKind::Copy), 1536);
        t.validate().unwrap();
    }

    #[test]
    fn geqrf_single_panel_is_one_geqr2() {
        let t = generate_geqrf_trace(32, 32, &AddressMap::packed()).unwrap();
        assert_eq!(t.len(), 1);
        let inv = &t.invocations[0];
        assert_eq!(inv.kind, KernelKind::Geqr2);
        assert_eq!(inv.operands[0].region, t.layout(Buffer::A).unwrap().full());
        assert_eq!(
            inv.operands[1].region,
            t.layout(Buffer::Tau).unwrap().full()
        );
    }

    #[test]
    fn geqrf_two_steps_enumerated_by_hand() {
        let t = generate_geqrf_trace(96, 32, &AddressMap::packed()).unwrap();
        assert_eq!(t.len(), 79);
        let mut expected = Vec::new();
        for _ in 0..2 {
            expected.push("geqr2".to_string());
            expected.push("larft".to_string());
            expected.extend(std::iter::repeat_n("copy".to_string(), 32));
            for k in ["trmm_RLNU", "gemm_TN", "trmm_RUNN", "gemm_NT", "trmm_RLTU"] {
                expected.push(k.to_string());
            }
        }
        expected.push("geqr2".to_string());
        assert_eq!(kinds(&t), expected);
    }

    #[test]
    fn geqrf_step_regions_follow_block_layout() {
        let t = generate_geqrf_trace(96, 32, &AddressMap::packed()).unwrap();
        let a = *t.layout(Buffer::A).unwrap();
        let w = *t.layout(Buffer::W).unwrap();
        // step 1 starts at j = 32; gemm_TN is at offset 2 + 32 + 1 within the step
        let gemm_tn = &t.invocations[39 + 35];
        assert_eq!(gemm_tn.label(), "gemm_TN");
        assert_eq!(gemm_tn.dims, Dims::mnk(32, 32, 32));
        assert_eq!(
            gemm_tn.operands[0].region,
            Region::new(a, 64, 64, 32, 32, Shape::Full)
        );
        assert_eq!(
            gemm_tn.operands[1].region,
            Region::new(a, 64, 32, 32, 32, Shape::Full)
        );
        assert_eq!(
            gemm_tn.operands[2].region,
            Region::new(w, 32, 0, 32, 32, Shape::Full)
        );
        let gemm_nt = &t.invocations[39 + 37];
        assert_eq!(gemm_nt.label(), "gemm_NT");
        assert_eq!(gemm_nt.operands[1].region, gemm_tn.operands[2].region);
        assert_eq!(gemm_nt.operands[2].role, Role::Inout);
    }

    #[test]
    fn gemm_nt_can_read_a12_instead() {
        let opts = TraceOptions {
            gemm_nt_input: GemmNtInput::A12,
        };
        let t = generate_geqrf_trace_with(96, 32, &AddressMap::packed(), &opts).unwrap();
        let a = *t.layout(Buffer::A).unwrap();
        let gemm_nt = &t.invocations[37];
        assert_eq!(
            gemm_nt.operands[1].region,
            Region::new(a, 0, 32, 32, 64, Shape::Full)
        );
    }

    #[test]
    fn potrf_and_trtri_small_cases() {
        let map = AddressMap::packed();
        assert_eq!(
            kinds(&generate_potrf_trace(32, 32, &map).unwrap()),
            ["potf2_U"]
        );
        assert_eq!(
            kinds(&generate_potrf_trace(96, 32, &map).unwrap()),
            [
                "potf2_U",
                "trsm_LUTN",
                "syrk_UT",
                "potf2_U",
                "trsm_LUTN",
                "syrk_UT",
                "potf2_U"
            ]
        );
        assert_eq!(generate_potrf_trace(2400, 32, &map).unwrap().len(), 223);
        assert_eq!(
            kinds(&generate_trtri_trace(32, 32, &map).unwrap()),
            ["trti2_LN"]
        );
        assert_eq!(
            kinds(&generate_trtri_trace(96, 32, &map).unwrap()),
            [
                "trti2_LN",
                "trmm_RLNN",
                "trsm_LLNN",
                "trti2_LN",
                "trmm_RLNN",
                "trsm_LLNN",
                "trti2_LN"
            ]
        );
        assert_eq!(generate_trtri_trace(2400, 32, &map).unwrap().len(), 223);
    }

    #[test]
    fn ragged_last_panel() {
        let t = generate_geqrf_trace(100, 32, &AddressMap::packed()).unwrap();
        // steps at j = 0, 32, 64 (36 > 32 columns remain), final panel of width 4
        assert_eq!(t.len(), 3 * 39 + 1);
        assert_eq!(t.invocations.last().unwrap().dims, Dims::mn(4, 4));
        let p = generate_potrf_trace(100, 32, &AddressMap::packed()).unwrap();
        assert_eq!(p.len(), 3 * 3 + 1);
        assert_eq!(p.invocations.last().unwrap().dims, Dims::mn(4, 4));
    }

    #[test]
    fn rejects_bad_blocking_and_overlap() {
        let map = AddressMap::packed();
        for (n, b) in [(0, 0), (10, 0), (10, 11)] {
            assert!(matches!(
                generate_geqrf_trace(n, b, &map),
                Err(TraceError::InvalidBlocking { .. })
            ));
            assert!(generate_potrf_trace(n, b, &map).is_err());
            assert!(generate_trtri_trace(n, b, &map).is_err());
        }
        let overlapping = AddressMap::explicit(0, 64, 1 << 20);
        assert!(matches!(
            generate_geqrf_trace(64, 32, &overlapping),
            Err(TraceError::OverlappingLayouts(Buffer::A, Buffer::Tau))
        ));
    }

    #[test]
    fn packed_layouts_are_aligned_and_disjoint() {
        let t = generate_geqrf_trace(100, 32, &AddressMap::packed()).unwrap();
        for l in &t.layouts {
            assert_eq!(l.base % 64, 0);
        }
        let tau = t.layout(Buffer::Tau).unwrap();
        assert_eq!(tau.base, 100 * 100 * 8);
        assert_eq!(
            t.layout(Buffer::W).unwrap().base,
            (tau.base + 800).div_ceil(64) * 64
        );
    }

    #[test]
    fn a22_shrinks_across_steps() {
        let t = generate_geqrf_trace(256, 32, &AddressMap::packed()).unwrap();
        let a22: Vec<LineSet> = t
            .invocations
            .iter()
            .filter(|i| i.label() == "gemm_NT")
            .map(|i| i.operands[2].region.lines(64))
            .collect();
        for pair in a22.windows(2) {
            assert!(pair[0].is_superset(&pair[1]));
            assert!(pair[0].len() > pair[1].len());
        }
    }

    proptest! {
        #[test]
        fn geqrf_counts_match_closed_form(blocks in 1u64..12, b in 1u64..24) {
            let n = blocks * b;
            let t = generate_geqrf_trace(n, b, &AddressMap::packed()).unwrap();
            prop_assert_eq!(t.len() as u64, (n / b - 1) * (7 + b) + 1);
            prop_assert_eq!(t.count_kind(KernelKind::Copy) as u64, (n / b - 1) * b);
            prop_assert!(t.validate().is_ok());
        }

        #[test]
        fn footprints_stay_inside_layouts(n in 1u64..90, b in 1u64..40, alg in 0usize..3) {
            prop_assume!(b <= n);
            let alg = [Algorithm::Geqrf, Algorithm::Potrf, Algorithm::Trtri][alg];
            let t = generate_trace(alg, n, b, &AddressMap::packed(), &TraceOptions::default()).unwrap();
            prop_assert!(t.validate().is_ok());
            let all = t.layouts.iter().fold(LineSet::new(), |acc, l| acc.union(&l.lines(64)));
            for inv in &t.invocations {
                for op in &inv.operands {
                    prop_assert!(all.is_superset(&op.region.lines(64)));
                }
            }
            let again = generate_trace(alg, n, b, &AddressMap::packed(), &TraceOptions::default()).unwrap();
            prop_assert_eq!(t, again);
        }
    }
}
