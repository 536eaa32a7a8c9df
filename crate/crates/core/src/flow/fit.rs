use super::FlowField;

/// Least-squares fit of `w(p) = s (p - c) + t` over a pixel subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionFit {
    /// Relative expansion `s`; a zoom by factor `k` gives `s = k - 1`.
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    /// RMS length of the residual vectors.
    pub residual_rms: f64,
    /// Share of the flow energy the model explains, in `[0, 1]`.
    pub explained: f64,
    pub count: usize,
}

/// Fits a radial expansion about `center` plus a translation.
pub fn fit_expansion(flow: &FlowField, center: [f64; 2], mut mask: impl FnMut(usize, usize) -> bool) -> ExpansionFit {
    // Normal equations in (s, tx, ty); the cross terms use centered moments.
    let (mut n, mut sx, mut sy, mut srr, mut su, mut sv, mut sru) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut pts = Vec::new();
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if !mask(x, y) {
                continue;
            }
            let dx = x as f64 - center[0];
            let dy = y as f64 - center[1];
            let (u, v) = flow.at(x, y);
            n += 1.0;
            sx += dx;
            sy += dy;
            srr += dx * dx + dy * dy;
            su += u;
            sv += v;
            sru += dx * u + dy * v;
            pts.push((dx, dy, u, v));
        }
    }
    if pts.is_empty() {
        return ExpansionFit {
            scale: 0.0,
            tx: 0.0,
            ty: 0.0,
            residual_rms: 0.0,
            explained: 1.0,
            count: 0,
        };
    }
    let denom = srr - (sx * sx + sy * sy) / n;
    let scale = if denom > 0.0 {
        (sru - (sx * su + sy * sv) / n) / denom
    } else {
        0.0
    };
    let tx = (su - scale * sx) / n;
    let ty = (sv - scale * sy) / n;
    let (mut res, mut energy) = (0.0, 0.0);
    for (dx, dy, u, v) in pts {
        let ru = u - scale * dx - tx;
        let rv = v - scale * dy - ty;
        res += ru * ru + rv * rv;
        energy += u * u + v * v;
    }
    ExpansionFit {
        scale,
        tx,
        ty,
        residual_rms: (res / n).sqrt(),
        explained: if energy > 0.0 { (1.0 - res / energy).clamp(0.0, 1.0) } else { 1.0 },
        count: n as usize,
    }
}
