/// Numpy-style broadcast of two shapes (right-aligned).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = dim_from_right(a, rank - 1 - i);
        let db = dim_from_right(b, rank - 1 - i);
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn dim_from_right(s: &[usize], from_right: usize) -> usize {
    if from_right < s.len() {
        s[s.len() - 1 - from_right]
    } else {
        1
    }
}

/// Walks an output shape while tracking the flat offsets of two operands
/// broadcast into it.
pub(crate) struct Broadcast {
    out: Vec<usize>,
    sa: Vec<usize>,
    sb: Vec<usize>,
}

impl Broadcast {
    pub(crate) fn new(out: &[usize], a: &[usize], b: &[usize]) -> Self {
        Broadcast {
            out: out.to_vec(),
            sa: strides_in(out, a),
            sb: strides_in(out, b),
        }
    }

    pub(crate) fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let rank = self.out.len();
        let n: usize = self.out.iter().product();
        if n == 0 {
            return;
        }
        let mut idx = vec![0usize; rank];
        let (mut ia, mut ib) = (0usize, 0usize);
        for oi in 0..n {
            f(oi, ia, ib);
            // increment the multi-index from the last axis
            for d in (0..rank).rev() {
                idx[d] += 1;
                ia += self.sa[d];
                ib += self.sb[d];
                if idx[d] < self.out[d] {
                    break;
                }
                ia -= self.sa[d] * self.out[d];
                ib -= self.sb[d] * self.out[d];
                idx[d] = 0;
            }
        }
    }
}

/// Strides of `s` laid out against `out`, zero on broadcast axes.
fn strides_in(out: &[usize], s: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        let from_right = rank - 1 - i;
        let d = dim_from_right(s, from_right);
        strides[i] = if d == 1 { 0 } else { acc };
        if from_right < s.len() {
            acc *= d;
        }
    }
    strides
}
