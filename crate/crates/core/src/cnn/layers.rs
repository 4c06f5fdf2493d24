//! Forward and backward kernels for the layer stack.

use crate::cnn::CnnModel;

struct ConvCache {
    /// Layer input, (cin, h, w).
    input: Vec<f64>,
    /// Post-ReLU activation, (cout, h, w).
    act: Vec<f64>,
    /// Index into `act` of each pooled maximum.
    argmax: Vec<usize>,
}

pub(crate) struct Trace {
    convs: Vec<ConvCache>,
    /// Inputs to each dense layer.
    dense_in: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Range of output positions whose tap at offset `d` stays inside `0..n`.
fn valid(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Same-padded stride-1 convolution plus bias.
fn conv_forward(x: &[f64], cin: usize, h: usize, w: usize, wt: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let cout = b.len();
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        let o = &mut out[co * h * w..(co + 1) * h * w];
        o.fill(b[co]);
        for ci in 0..cin {
            let xi = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid(w, dx);
                    let wv = wt[((co * cin + ci) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let start = (iy * w + x0) as isize + dx;
                        let irow = &xi[start as usize..start as usize + (x1 - x0)];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += wv * iv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient if asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wt: &[f64],
    k: usize,
    dz: &[f64],
    dwt: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let cout = db.len();
    let pad = (k / 2) as isize;
    let mut dx = want_dx.then(|| vec![0.0; cin * h * w]);
    for co in 0..cout {
        let g = &dz[co * h * w..(co + 1) * h * w];
        db[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let xi = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid(h, dy);
                for kx in 0..k {
                    let dx_ = kx as isize - pad;
                    let (x0, x1) = valid(w, dx_);
                    let widx = ((co * cin + ci) * k + ky) * k + kx;
                    let wv = wt[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        let start = ((iy * w + x0) as isize + dx_) as usize;
                        let irow = &xi[start..start + (x1 - x0)];
                        for (gv, iv) in grow.iter().zip(irow) {
                            acc += gv * iv;
                        }
                        if let Some(dx) = dx.as_mut() {
                            let drow = &mut dx[ci * h * w + start..ci * h * w + start + (x1 - x0)];
                            for (dv, gv) in drow.iter_mut().zip(grow) {
                                *dv += wv * gv;
                            }
                        }
                    }
                    dwt[widx] += acc;
                }
            }
        }
    }
    dx
}

/// p×p max pooling with floor semantics; first maximum wins ties.
fn pool_forward(a: &[f64], c: usize, h: usize, w: usize, p: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / p, w / p);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut idx = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = ch * h * w + py * p * w + px * p;
                for dy in 0..p {
                    for dx in 0..p {
                        let i = ch * h * w + (py * p + dy) * w + px * p + dx;
                        if a[i] > a[best] {
                            best = i;
                        }
                    }
                }
                out.push(a[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

fn dense_forward(x: &[f64], wt: &[f64], b: &[f64]) -> Vec<f64> {
    let nin = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + wt[o * nin..(o + 1) * nin].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

pub(crate) fn forward(model: &CnnModel, input: &[f64]) -> Trace {
    let arch = &model.arch;
    let (k, p) = (arch.kernel, arch.pool);
    let [mut c, mut h, mut w] = arch.input;
    let mut x = input.to_vec();
    let mut convs = Vec::with_capacity(arch.conv_filters.len());
    for (i, &f) in arch.conv_filters.iter().enumerate() {
        let mut act = conv_forward(&x, c, h, w, &model.params[2 * i], &model.params[2 * i + 1], k);
        for v in &mut act {
            *v = v.max(0.0);
        }
        let (pooled, argmax) = pool_forward(&act, f, h, w, p);
        convs.push(ConvCache {
            input: std::mem::replace(&mut x, pooled),
            act,
            argmax,
        });
        c = f;
        h /= p;
        w /= p;
    }
    let base = 2 * arch.conv_filters.len();
    let n_dense = arch.hidden.len() + 1;
    let mut dense_in = Vec::with_capacity(n_dense);
    for j in 0..n_dense {
        let mut z = dense_forward(&x, &model.params[base + 2 * j], &model.params[base + 2 * j + 1]);
        if j + 1 < n_dense {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        dense_in.push(std::mem::replace(&mut x, z));
    }
    Trace {
        convs,
        dense_in,
        logits: x,
    }
}

/// Adds the parameter gradients of one sample, given ∂L/∂logits.
pub(crate) fn backward(model: &CnnModel, trace: &Trace, dlogits: &[f64], grads: &mut [Vec<f64>]) {
    let arch = &model.arch;
    let base = 2 * arch.conv_filters.len();
    let n_dense = trace.dense_in.len();
    let mut g = dlogits.to_vec();
    for j in (0..n_dense).rev() {
        let x = &trace.dense_in[j];
        let nin = x.len();
        let wt = &model.params[base + 2 * j];
        {
            let (dw, rest) = grads[base + 2 * j..].split_at_mut(1);
            let (dw, db) = (&mut dw[0], &mut rest[0]);
            for (o, &go) in g.iter().enumerate() {
                db[o] += go;
                if go != 0.0 {
                    for (d, xv) in dw[o * nin..(o + 1) * nin].iter_mut().zip(x) {
                        *d += go * xv;
                    }
                }
            }
        }
        let mut dx = vec![0.0; nin];
        for (o, &go) in g.iter().enumerate() {
            if go != 0.0 {
                for (d, wv) in dx.iter_mut().zip(&wt[o * nin..(o + 1) * nin]) {
                    *d += go * wv;
                }
            }
        }
        if j > 0 {
            // Input of dense j is the ReLU output of dense j − 1.
            for (d, xv) in dx.iter_mut().zip(x) {
                if *xv <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        g = dx;
    }

    let k = arch.kernel;
    for i in (0..arch.conv_filters.len()).rev() {
        let cache = &trace.convs[i];
        let [cin, h, w] = arch.conv_input_shape(i);
        let mut dz = vec![0.0; cache.act.len()];
        for (&at, &gv) in cache.argmax.iter().zip(&g) {
            dz[at] += gv;
        }
        for (d, &a) in dz.iter_mut().zip(&cache.act) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let (dw, rest) = grads[2 * i..].split_at_mut(1);
        let dx = conv_backward(
            &cache.input,
            cin,
            h,
            w,
            &model.params[2 * i],
            k,
            &dz,
            &mut dw[0],
            &mut rest[0],
            i > 0,
        );
        if let Some(dx) = dx {
            // Gradient w.r.t. the previous layer's pooled output; the next
            // iteration routes it through pooling and the ReLU mask.
            g = dx;
        }
    }
}
