//! Slice kernels behind the typed operators. All assume periodic wrap and
//! `h = 1/n`; vector slices hold `3 n^3` values.

#[inline]
fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
fn prev(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

pub fn grad_node(n: usize, p: &[f64], out: &mut [f64]) {
    let m = n * n * n;
    let inv = n as f64;
    let (ox, rest) = out.split_at_mut(m);
    let (oy, oz) = rest.split_at_mut(m);
    for k in 0..n {
        let kp = next(k, n);
        for j in 0..n {
            let jp = next(j, n);
            for i in 0..n {
                let ip = next(i, n);
                let c = i + n * (j + n * k);
                ox[c] = (p[ip + n * (j + n * k)] - p[c]) * inv;
                oy[c] = (p[i + n * (jp + n * k)] - p[c]) * inv;
                oz[c] = (p[i + n * (j + n * kp)] - p[c]) * inv;
            }
        }
    }
}

pub fn div_edge(n: usize, u: &[f64], out: &mut [f64]) {
    let m = n * n * n;
    let inv = n as f64;
    let (ux, uy, uz) = (&u[..m], &u[m..2 * m], &u[2 * m..]);
    for k in 0..n {
        let km = prev(k, n);
        for j in 0..n {
            let jm = prev(j, n);
            for i in 0..n {
                let im = prev(i, n);
                let c = i + n * (j + n * k);
                out[c] = (ux[c] - ux[im + n * (j + n * k)] + uy[c] - uy[i + n * (jm + n * k)] + uz[c]
                    - uz[i + n * (j + n * km)])
                    * inv;
            }
        }
    }
}

pub fn curl_edge(n: usize, u: &[f64], out: &mut [f64]) {
    let m = n * n * n;
    let inv = n as f64;
    let (ux, uy, uz) = (&u[..m], &u[m..2 * m], &u[2 * m..]);
    let (fx, rest) = out.split_at_mut(m);
    let (fy, fz) = rest.split_at_mut(m);
    for k in 0..n {
        let kp = next(k, n);
        for j in 0..n {
            let jp = next(j, n);
            for i in 0..n {
                let ip = next(i, n);
                let c = i + n * (j + n * k);
                let ci = ip + n * (j + n * k);
                let cj = i + n * (jp + n * k);
                let ck = i + n * (j + n * kp);
                fx[c] = (uz[cj] - uz[c] - uy[ck] + uy[c]) * inv;
                fy[c] = (ux[ck] - ux[c] - uz[ci] + uz[c]) * inv;
                fz[c] = (uy[ci] - uy[c] - ux[cj] + ux[c]) * inv;
            }
        }
    }
}

pub fn curl_face(n: usize, v: &[f64], out: &mut [f64]) {
    let m = n * n * n;
    let inv = n as f64;
    let (vx, vy, vz) = (&v[..m], &v[m..2 * m], &v[2 * m..]);
    let (ex, rest) = out.split_at_mut(m);
    let (ey, ez) = rest.split_at_mut(m);
    for k in 0..n {
        let km = prev(k, n);
        for j in 0..n {
            let jm = prev(j, n);
            for i in 0..n {
                let im = prev(i, n);
                let c = i + n * (j + n * k);
                let ci = im + n * (j + n * k);
                let cj = i + n * (jm + n * k);
                let ck = i + n * (j + n * km);
                ex[c] = (vz[c] - vz[cj] - vy[c] + vy[ck]) * inv;
                ey[c] = (vx[c] - vx[ck] - vz[c] + vz[ci]) * inv;
                ez[c] = (vy[c] - vy[ci] - vx[c] + vx[cj]) * inv;
            }
        }
    }
}

pub fn div_face(n: usize, v: &[f64], out: &mut [f64]) {
    let m = n * n * n;
    let inv = n as f64;
    let (vx, vy, vz) = (&v[..m], &v[m..2 * m], &v[2 * m..]);
    for k in 0..n {
        let kp = next(k, n);
        for j in 0..n {
            let jp = next(j, n);
            for i in 0..n {
                let ip = next(i, n);
                let c = i + n * (j + n * k);
                out[c] = (vx[ip + n * (j + n * k)] - vx[c] + vy[i + n * (jp + n * k)] - vy[c]
                    + vz[i + n * (j + n * kp)]
                    - vz[c])
                    * inv;
            }
        }
    }
}

/// `out = curl_face(w .* curl_edge(u))`, the weighted curl-curl operator.
pub fn curl_w_curl(n: usize, w: &[f64], u: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    curl_edge(n, u, tmp);
    for (t, wi) in tmp.iter_mut().zip(w) {
        *t *= wi;
    }
    curl_face(n, tmp, out);
}
