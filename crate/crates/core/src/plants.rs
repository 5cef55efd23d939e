//! Reference plants used by tests, fixtures and the CLI demo.
//!
//! Indices in the builders are 1-based to keep the equations readable.

use crate::algebra::{rat, Mat};
use crate::system::{FeedbackLaw, StateSpaceSystem};

struct Builder {
    a: Mat,
    b: Mat,
    c: Mat,
}

impl Builder {
    fn new(n: usize, m: usize, p: usize) -> Self {
        Builder { a: Mat::zeros(n, n), b: Mat::zeros(n, m), c: Mat::zeros(p, n) }
    }

    /// `x_i' += k x_j`
    fn ax(mut self, i: usize, j: usize, k: i64) -> Self {
        self.a[(i - 1, j - 1)] = rat(k);
        self
    }

    /// `x_i' += k u_j`
    fn bu(mut self, i: usize, j: usize, k: i64) -> Self {
        self.b[(i - 1, j - 1)] = rat(k);
        self
    }

    /// `y_i += k x_j`
    fn cx(mut self, i: usize, j: usize, k: i64) -> Self {
        self.c[(i - 1, j - 1)] = rat(k);
        self
    }

    fn build(self) -> StateSpaceSystem {
        StateSpaceSystem::new(self.a, self.b, self.c).expect("reference plant dimensions")
    }
}

/// Which state drives the auxiliary signal `z` entering `x7'` in the
/// nine-state plant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NineStateCoupling {
    /// `z = x2`: not decouplable.
    FromX2,
    /// `z = x3`: decouplable with orders (4, 1, 4).
    FromX3,
}

/// Nine states, four inputs, three outputs:
///
/// ```text
/// x1' = u1   x2' = u2   x3' = x4   x4' = x5   x5' = x6   x6' = u3
/// x7' = x8 + z          x8' = x9   x9' = u4
/// y1 = x1    y2 = x2    y3 = x1 + x3
/// ```
pub fn nine_state(coupling: NineStateCoupling) -> StateSpaceSystem {
    let b = Builder::new(9, 4, 3)
        .bu(1, 1, 1)
        .bu(2, 2, 1)
        .ax(3, 4, 1)
        .ax(4, 5, 1)
        .ax(5, 6, 1)
        .bu(6, 3, 1)
        .ax(7, 8, 1)
        .ax(8, 9, 1)
        .bu(9, 4, 1)
        .cx(1, 1, 1)
        .cx(2, 2, 1)
        .cx(3, 1, 1)
        .cx(3, 3, 1);
    match coupling {
        NineStateCoupling::FromX2 => b.ax(7, 2, 1),
        NineStateCoupling::FromX3 => b.ax(7, 3, 1),
    }
    .build()
}

/// `u1 = x7, u2 = v2, u3 = v3 - v1, u4 = v1 - x5` for the `z = x3` plant.
pub fn nine_state_reference_law() -> FeedbackLaw {
    let mut f = Mat::zeros(4, 9);
    f[(0, 6)] = rat(1);
    f[(3, 4)] = rat(-1);
    let g = Mat::from_i64(&[&[0, 0, 0], &[0, 1, 0], &[-1, 0, 1], &[1, 0, 0]]);
    FeedbackLaw { f, g }
}

/// Twenty-two states, ten inputs, six outputs.
///
/// ```text
/// x1' = u1    x2' = u2    x3' = u3    x4' = x5    x5' = u4    x6' = u5
/// x7' = x8    x8' = x9    x9' = x10   x10' = x11  x11' = u6
/// x12' = x3 + x13         x13' = x14  x14' = x1 + x15
/// x15' = x16  x16' = u7   x17' = x18  x18' = x2 + x19
/// x19' = x20  x20' = u8   x21' = u9   x22' = u10
/// y1 = x1  y2 = x2  y3 = x3  y4 = x3 - x4  y5 = x6  y6 = x3 - x4 + x6 + x7
/// ```
pub fn twenty_two_state() -> StateSpaceSystem {
    Builder::new(22, 10, 6)
        .bu(1, 1, 1)
        .bu(2, 2, 1)
        .bu(3, 3, 1)
        .ax(4, 5, 1)
        .bu(5, 4, 1)
        .bu(6, 5, 1)
        .ax(7, 8, 1)
        .ax(8, 9, 1)
        .ax(9, 10, 1)
        .ax(10, 11, 1)
        .bu(11, 6, 1)
        .ax(12, 3, 1)
        .ax(12, 13, 1)
        .ax(13, 14, 1)
        .ax(14, 1, 1)
        .ax(14, 15, 1)
        .ax(15, 16, 1)
        .bu(16, 7, 1)
        .ax(17, 18, 1)
        .ax(18, 2, 1)
        .ax(18, 19, 1)
        .ax(19, 20, 1)
        .bu(20, 8, 1)
        .bu(21, 9, 1)
        .bu(22, 10, 1)
        .cx(1, 1, 1)
        .cx(2, 2, 1)
        .cx(3, 3, 1)
        .cx(4, 3, 1)
        .cx(4, 4, -1)
        .cx(5, 6, 1)
        .cx(6, 3, 1)
        .cx(6, 4, -1)
        .cx(6, 6, 1)
        .cx(6, 7, 1)
        .build()
}

/// The ten-assignment decoupling law for [`twenty_two_state`]:
///
/// ```text
/// u1 = x21   u2 = x22   u3 = x5 + x13   u5 = x17   u4 = v3 - x14
/// u6 = v6 - v4 - v5     u7 = v4 - v1    u8 = v5 - v2
/// u9 = v1    u10 = v2
/// ```
pub fn twenty_two_state_reference_law() -> FeedbackLaw {
    let mut f = Mat::zeros(10, 22);
    let mut g = Mat::zeros(10, 6);
    let mut fx = |u: usize, x: usize, k: i64| f[(u - 1, x - 1)] = rat(k);
    fx(1, 21, 1);
    fx(2, 22, 1);
    fx(3, 5, 1);
    fx(3, 13, 1);
    fx(5, 17, 1);
    fx(4, 14, -1);
    let mut gv = |u: usize, v: usize, k: i64| g[(u - 1, v - 1)] = rat(k);
    gv(4, 3, 1);
    gv(6, 6, 1);
    gv(6, 4, -1);
    gv(6, 5, -1);
    gv(7, 4, 1);
    gv(7, 1, -1);
    gv(8, 5, 1);
    gv(8, 2, -1);
    gv(9, 1, 1);
    gv(10, 2, 1);
    FeedbackLaw { f, g }
}

/// `x' = u`, `y = x` in `n` dimensions.
pub fn identity_system(n: usize) -> StateSpaceSystem {
    StateSpaceSystem::new(Mat::zeros(n, n), Mat::identity(n), Mat::identity(n)).expect("square identity")
}
