//! Synthetic labeled corpora with planted vulnerability patterns.
//!
//! Each generated function carries one of four planted patterns in
//! either its vulnerable or its guarded form:
//!
//! 0. array write through an unvalidated input-derived index,
//! 1. sensitive string copy without a length check,
//! 2. allocation size from an unchecked multiplication, stored through
//!    the resulting pointer,
//! 3. store through a pointer that may be null.
//!
//! The surrounding code is designed to make whole-function token bags
//! nearly label-neutral: every function also contains decoy fragments
//! with the *other* variant's surface tokens (guards over irrelevant
//! arithmetic, writes with constant indices, derefs of local addresses)
//! plus float-only noise statements that never become interest points.
//! What separates the classes is the dependence structure around the
//! planted pattern — exactly what PDG slices isolate.

use super::{DatasetManifest, ManifestRecord};
use crate::graph_ingest::Label;
use crate::rng::Rng;

/// Corpus shape; `functions` are split between labels by
/// `vulnerable_ratio` and patterns rotate round-robin.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub functions: usize,
    pub vulnerable_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            functions: 400,
            vulnerable_ratio: 0.5,
            seed: 1,
        }
    }
}

const FLOAT_VARS: [&str; 6] = ["t0", "t1", "t2", "t3", "t4", "t5"];

struct FunctionBuilder {
    lines: Vec<String>,
}

impl FunctionBuilder {
    fn push(&mut self, stmt: &str) {
        self.lines.push(format!("  {stmt}"));
    }

    fn noise_block(&mut self, rng: &mut Rng, count: usize) {
        for _ in 0..count {
            let a = FLOAT_VARS[rng.below(FLOAT_VARS.len())];
            let b = FLOAT_VARS[rng.below(FLOAT_VARS.len())];
            let c = FLOAT_VARS[rng.below(FLOAT_VARS.len())];
            let lit = ["0.5", "0.25", "1.5", "2.0"][rng.below(4)];
            match rng.below(5) {
                0 => self.push(&format!("{a} = {b} + {lit};")),
                1 => self.push(&format!("{a} = {b} * {lit};")),
                2 => self.push(&format!("{a} = {a} - {lit};")),
                3 => self.push(&format!(
                    "if ({a} < {b}) {{ {c} = {c} + {lit}; }}"
                )),
                _ => self.push(&format!(
                    "while ({a} < {b}) {{ {a} = {a} + {lit}; {b} = {b} - {lit}; }}"
                )),
            }
        }
    }

    /// Parameter checks without arithmetic or risky operations: they use
    /// `x` (balancing its token count across labels) but never become
    /// interest points.
    fn param_check(&mut self, rng: &mut Rng) {
        let a = FLOAT_VARS[rng.below(FLOAT_VARS.len())];
        let lit = rng.below(10);
        self.push(&format!("if (x > {lit}) {{ {a} = {a} + 0.5; }}"));
    }
}

/// Emits the planted pattern. Both labels carry the same taint source
/// and the same guarded tainted use. The flip sits one dependence hop
/// before a second, bare use: clean functions route the tainted value
/// through a family-specific sanitizer call, vulnerable ones through a
/// plain arithmetic/copy step. A dead statement mirrors the *other*
/// variant's tokens, so call-name and operator counts are equal across
/// labels and the bag of tokens carries (almost) no signal — only the
/// dependence wiring into the bare use does, which is exactly what the
/// slice around it captures.
fn plant_pattern(b: &mut FunctionBuilder, family: usize, vulnerable: bool, rng: &mut Rng) {
    let _ = rng;
    match family {
        0 => {
            b.push("int buf[64];");
            b.push("int idx;");
            b.push("int jdx;");
            b.push("int kdx;");
            b.push("int cap;");
            b.push("cap = 64;");
            b.push("idx = read_input(x);");
            b.push("if (idx < cap) { buf[idx] = 3; }");
            if vulnerable {
                b.push("jdx = idx + 2;");
                b.push("kdx = bound_index(idx, cap);");
            } else {
                b.push("jdx = bound_index(idx, cap);");
                b.push("kdx = idx + 2;");
            }
            b.push("buf[jdx] = 5;");
        }
        1 => {
            b.push("char dst[32];");
            b.push("char *src;");
            b.push("char *loc;");
            b.push("char *locb;");
            b.push("int n;");
            b.push("int cap;");
            b.push("cap = 32;");
            b.push("src = get_buf(x);");
            b.push("n = probe_len(src);");
            // The length-checked copy goes through the bounded routine;
            // it never matches the sensitive-API rule, so only the bare
            // copy below produces a behavior slice.
            b.push("if (n < cap) { strncpy(dst, src, cap); }");
            if vulnerable {
                b.push("loc = src;");
                b.push("locb = trim_tag(src, n, cap);");
            } else {
                b.push("loc = trim_tag(src, n, cap);");
                b.push("locb = src;");
            }
            b.push("strcpy(dst, loc);");
        }
        2 => {
            b.push("int count;");
            b.push("int base;");
            b.push("int base2;");
            b.push("int base3;");
            b.push("int size;");
            b.push("int size2;");
            b.push("int maxn;");
            b.push("int *p;");
            b.push("int *p2;");
            b.push("base = 8;");
            b.push("maxn = 1000;");
            b.push("count = read_count(x);");
            b.push("if (count < maxn) { size = count * base; p = alloc_buf(size); fill_zero(p, size); }");
            if vulnerable {
                b.push("base2 = count + 1;");
                b.push("base3 = clamp_len(count, maxn);");
            } else {
                b.push("base2 = clamp_len(count, maxn);");
                b.push("base3 = count + 1;");
            }
            b.push("size2 = base2 * 2;");
            b.push("p2 = alloc_buf(size2);");
            b.push("*p2 = size2;");
        }
        _ => {
            b.push("int *q;");
            b.push("int *r;");
            b.push("int *rb;");
            b.push("int item;");
            b.push("int c2;");
            b.push("item = 5;");
            b.push("c2 = 1;");
            b.push("q = lookup_slot(x);");
            b.push("if (q != 0) { *q = item; }");
            if vulnerable {
                b.push("r = q;");
                b.push("rb = ensure_slot(q);");
            } else {
                b.push("r = ensure_slot(q);");
                b.push("rb = q;");
            }
            b.push("*r = c2;");
        }
    }
}

fn generate_function(index: usize, vulnerable: bool, seed: u64) -> String {
    let mut rng = Rng::new(seed ^ (index as u64).wrapping_mul(0x9e37_79b9));
    let family = index % 4;
    let mut b = FunctionBuilder { lines: Vec::new() };

    for v in FLOAT_VARS {
        b.push(&format!("float {v};"));
    }
    for (i, v) in FLOAT_VARS.iter().enumerate() {
        b.push(&format!("{v} = {}.5;", i));
    }
    let pre = 7 + rng.below(8);
    b.noise_block(&mut rng, pre);
    for _ in 0..rng.below(3) {
        b.param_check(&mut rng);
    }
    plant_pattern(&mut b, family, vulnerable, &mut rng);
    let post = 5 + rng.below(7);
    b.noise_block(&mut rng, post);
    for _ in 0..rng.below(2) {
        b.param_check(&mut rng);
    }
    if rng.below(3) == 0 {
        b.push("return;");
    }

    format!("void fn_{index:04}(int x){{\n{}\n}}\n", b.lines.join("\n"))
}

/// Generates a manifest of labeled mini-C functions.
pub fn generate(config: &SyntheticConfig) -> DatasetManifest {
    let n = config.functions;
    let n_vulnerable = (n as f64 * config.vulnerable_ratio).round() as usize;
    let mut labels = vec![false; n];
    // Spread vulnerable labels over the pattern rotation, then shuffle.
    for flag in labels.iter_mut().take(n_vulnerable) {
        *flag = true;
    }
    Rng::new(config.seed).shuffle(&mut labels);

    let records = (0..n)
        .map(|i| ManifestRecord {
            id: format!("fn_{i:04}"),
            label: if labels[i] {
                Label::Vulnerable
            } else {
                Label::Clean
            },
            source: Some(generate_function(i, labels[i], config.seed)),
            cpg: None,
        })
        .collect();
    DatasetManifest {
        provenance: Some(format!(
            "synthetic planted-pattern corpus (n={n}, seed={})",
            config.seed
        )),
        records,
    }
}
