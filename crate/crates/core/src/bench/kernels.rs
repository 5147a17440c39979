//! Benchmark kernels: source text, input generation and reference
//! evaluation written directly in Rust.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Values of named variables.
pub type Values = BTreeMap<String, Vec<i32>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    /// `sum += a[i] * b[i]` over `n` elements.
    DotProduct { n: u32 },
    /// Two adjacent outputs of a convolution against time-reversed
    /// coefficients: `y0 += x[k] * h[k]; y1 += x[k + 1] * h[k]`.
    Convolution { n: u32 },
    /// `y[j] = sum over i < taps of h[i] * x[j + i]` for `j < outputs`.
    Fir { outputs: u32, taps: u32 },
    /// `c = a * b` with `b` stored transposed as `bt`.
    MatMul { rows: u32, inner: u32, cols: u32 },
}

fn arr(len: u32) -> u32 {
    len.max(1)
}

impl Kernel {
    pub fn source(&self) -> String {
        match *self {
            Kernel::DotProduct { n } => format!(
                "int a[{a}]; int b[{a}]; int sum = 0; int i;\n\
                 for (i = 0; i < {n}; i++) {{\n    sum += a[i] * b[i];\n}}\n",
                a = arr(n)
            ),
            Kernel::Convolution { n } => format!(
                "int x[{x}]; int h[{h}]; int y0 = 0; int y1 = 0; int k;\n\
                 for (k = 0; k < {n}; k++) {{\n    y0 += x[k] * h[k];\n    y1 += x[k + 1] * h[k];\n}}\n",
                x = n + 1,
                h = arr(n)
            ),
            Kernel::Fir { outputs, taps } => format!(
                "int x[{x}]; int h[{h}]; int y[{y}]; int acc; int j; int i;\n\
                 for (j = 0; j < {outputs}; j++) {{\n    acc = 0;\n    \
                 for (i = 0; i < {taps}; i++) {{\n        acc += h[i] * x[j + i];\n    }}\n    \
                 y[j] = acc;\n}}\n",
                x = arr((outputs + taps).saturating_sub(1)),
                h = arr(taps),
                y = arr(outputs)
            ),
            Kernel::MatMul { rows, inner, cols } => format!(
                "int a[{a}]; int bt[{b}]; int c[{c}]; int s; int i; int j; int k;\n\
                 for (i = 0; i < {rows}; i++) {{\n    for (j = 0; j < {cols}; j++) {{\n        s = 0;\n        \
                 for (k = 0; k < {inner}; k++) {{\n            s += a[i * {inner} + k] * bt[j * {inner} + k];\n        }}\n        \
                 c[i * {cols} + j] = s;\n    }}\n}}\n",
                a = arr(rows * inner),
                b = arr(cols * inner),
                c = arr(rows * cols)
            ),
        }
    }

    /// Input arrays and their lengths.
    fn input_shapes(&self) -> Vec<(&'static str, u32)> {
        match *self {
            Kernel::DotProduct { n } => vec![("a", arr(n)), ("b", arr(n))],
            Kernel::Convolution { n } => vec![("x", n + 1), ("h", arr(n))],
            Kernel::Fir { outputs, taps } => {
                vec![("x", arr((outputs + taps).saturating_sub(1))), ("h", arr(taps))]
            }
            Kernel::MatMul { rows, inner, cols } => vec![("a", arr(rows * inner)), ("bt", arr(cols * inner))],
        }
    }

    /// Full-range pseudorandom inputs.
    pub fn inputs(&self, seed: u64) -> Values {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.input_shapes()
            .into_iter()
            .map(|(name, len)| (name.to_string(), (0..len).map(|_| rng.gen::<i32>()).collect()))
            .collect()
    }

    /// Final values of every variable the program stores, given `inputs`.
    pub fn oracle(&self, inputs: &Values) -> Values {
        let get = |name: &str| inputs[name].as_slice();
        let dot = |a: &[i32], b: &[i32]| a.iter().zip(b).fold(0i32, |s, (x, y)| s.wrapping_add(x.wrapping_mul(*y)));
        let mut out = inputs.clone();
        let mut put = |name: &str, v: Vec<i32>| {
            out.insert(name.to_string(), v);
        };
        match *self {
            Kernel::DotProduct { n } => {
                let n = n as usize;
                put("sum", vec![dot(&get("a")[..n], &get("b")[..n])]);
            }
            Kernel::Convolution { n } => {
                let (x, h, n) = (get("x"), get("h"), n as usize);
                put("y0", vec![dot(&x[..n], &h[..n])]);
                put("y1", vec![dot(&x[1..=n], &h[..n])]);
            }
            Kernel::Fir { outputs, taps } => {
                let (x, h, t) = (get("x"), get("h"), taps as usize);
                let mut y: Vec<i32> = (0..outputs as usize).map(|j| dot(&h[..t], &x[j..j + t])).collect();
                put("acc", vec![y.last().copied().unwrap_or(0)]);
                y.resize(arr(outputs) as usize, 0);
                put("y", y);
            }
            Kernel::MatMul { rows, inner, cols } => {
                let (a, bt) = (get("a"), get("bt"));
                let (r, k, p) = (rows as usize, inner as usize, cols as usize);
                let mut c = vec![0i32; arr(rows * cols) as usize];
                let mut last = 0;
                for i in 0..r {
                    for j in 0..p {
                        last = dot(&a[i * k..(i + 1) * k], &bt[j * k..(j + 1) * k]);
                        c[i * p + j] = last;
                    }
                }
                put("c", c);
                put("s", vec![last]);
            }
        }
        out
    }
}
