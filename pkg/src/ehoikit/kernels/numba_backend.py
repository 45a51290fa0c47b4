"""Numba-compiled kernel implementations (default backend).

Same contracts as numpy_backend. Rasterizers and the RoI backward scatter
stay deterministic: parallel loops only ever own disjoint output slices.
"""

import numba as nb
import numpy as np

NAME = "numba"

_TEX_DARK = 0.55


@nb.njit(cache=True, inline="always")
def _tex_dark(x, y, tex, tex_scale):
    if tex == 1:
        return ((x + y) // tex_scale) % 2 == 0
    if tex == 2:
        return (x % tex_scale) < tex_scale // 2 and (y % tex_scale) < tex_scale // 2
    if tex == 3:
        return ((x // tex_scale) + (y // tex_scale)) % 2 == 0
    return False


@nb.njit(cache=True, inline="always")
def _put(rgb, mask, depth, y, x, color, inst_id, depth_val, dark):
    f = _TEX_DARK if dark else 1.0
    rgb[y, x, 0] = color[0] * f
    rgb[y, x, 1] = color[1] * f
    rgb[y, x, 2] = color[2] * f
    mask[y, x] = inst_id
    depth[y, x] = depth_val


@nb.njit(cache=True)
def fill_ellipse(rgb, mask, depth, cx, cy, rx, ry, angle, color, inst_id,
                 depth_val, tex=0, tex_scale=4):
    h, w = mask.shape
    rmax = max(rx, ry)
    xs = max(int(np.floor(cx - rmax)), 0)
    ys = max(int(np.floor(cy - rmax)), 0)
    xe = min(int(np.ceil(cx + rmax)) + 1, w)
    ye = min(int(np.ceil(cy + rmax)) + 1, h)
    ca = np.cos(angle)
    sa = np.sin(angle)
    for y in range(ys, ye):
        dy = y - cy
        for x in range(xs, xe):
            dx = x - cx
            u = (dx * ca + dy * sa) / rx
            v = (-dx * sa + dy * ca) / ry
            if u * u + v * v <= 1.0:
                _put(rgb, mask, depth, y, x, color, inst_id, depth_val,
                     _tex_dark(x, y, tex, tex_scale))


@nb.njit(cache=True)
def fill_ring(rgb, mask, depth, cx, cy, r_out, r_in, color, inst_id,
              depth_val, tex=0, tex_scale=4):
    h, w = mask.shape
    xs = max(int(np.floor(cx - r_out)), 0)
    ys = max(int(np.floor(cy - r_out)), 0)
    xe = min(int(np.ceil(cx + r_out)) + 1, w)
    ye = min(int(np.ceil(cy + r_out)) + 1, h)
    ro2 = r_out * r_out
    ri2 = r_in * r_in
    for y in range(ys, ye):
        dy = y - cy
        for x in range(xs, xe):
            dx = x - cx
            d2 = dx * dx + dy * dy
            if ri2 <= d2 <= ro2:
                _put(rgb, mask, depth, y, x, color, inst_id, depth_val,
                     _tex_dark(x, y, tex, tex_scale))


@nb.njit(cache=True)
def fill_capsule(rgb, mask, depth, x0, y0, x1, y1, radius, color, inst_id,
                 depth_val):
    h, w = mask.shape
    xs = max(int(np.floor(min(x0, x1) - radius)), 0)
    ys = max(int(np.floor(min(y0, y1) - radius)), 0)
    xe = min(int(np.ceil(max(x0, x1) + radius)) + 1, w)
    ye = min(int(np.ceil(max(y0, y1) + radius)) + 1, h)
    ex = x1 - x0
    ey = y1 - y0
    seg2 = ex * ex + ey * ey
    r2 = radius * radius
    for y in range(ys, ye):
        for x in range(xs, xe):
            if seg2 <= 1e-12:
                t = 0.0
            else:
                t = ((x - x0) * ex + (y - y0) * ey) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            px = x0 + t * ex
            py = y0 + t * ey
            if (x - px) ** 2 + (y - py) ** 2 <= r2:
                _put(rgb, mask, depth, y, x, color, inst_id, depth_val, False)


@nb.njit(cache=True)
def fill_convex_polygon(rgb, mask, depth, xs_poly, ys_poly, color, inst_id,
                        depth_val, tex=0, tex_scale=4):
    h, w = mask.shape
    n = xs_poly.shape[0]
    xs = max(int(np.floor(xs_poly.min())), 0)
    ys = max(int(np.floor(ys_poly.min())), 0)
    xe = min(int(np.ceil(xs_poly.max())) + 1, w)
    ye = min(int(np.ceil(ys_poly.max())) + 1, h)
    for y in range(ys, ye):
        for x in range(xs, xe):
            pos = False
            neg = False
            for k in range(n):
                ax = xs_poly[k]
                ay = ys_poly[k]
                bx = xs_poly[(k + 1) % n]
                by = ys_poly[(k + 1) % n]
                cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
                if cross > 0:
                    pos = True
                elif cross < 0:
                    neg = True
            if not (pos and neg):
                _put(rgb, mask, depth, y, x, color, inst_id, depth_val,
                     _tex_dark(x, y, tex, tex_scale))


@nb.njit(cache=True, parallel=True)
def sep_gaussian_valid(img, kernel):
    h, w = img.shape
    k = kernel.shape[0]
    ow = w - k + 1
    oh = h - k + 1
    tmp = np.empty((h, ow), dtype=np.float64)
    for y in nb.prange(h):
        for x in range(ow):
            acc = 0.0
            for t in range(k):
                acc += img[y, x + t] * kernel[t]
            tmp[y, x] = acc
    out = np.empty((oh, ow), dtype=np.float64)
    for y in nb.prange(oh):
        for x in range(ow):
            acc = 0.0
            for t in range(k):
                acc += tmp[y + t, x] * kernel[t]
            out[y, x] = acc
    return out


@nb.njit(cache=True, parallel=True)
def window_all_clean(bad, k):
    h, w = bad.shape
    oh = h - k + 1
    ow = w - k + 1
    out = np.empty((oh, ow), dtype=np.bool_)
    for y in nb.prange(oh):
        for x in range(ow):
            clean = True
            for i in range(k):
                for j in range(k):
                    if bad[y + i, x + j]:
                        clean = False
                        break
                if not clean:
                    break
            out[y, x] = clean
    return out


@nb.njit(cache=True, parallel=True)
def _im2col(x, kh, kw, stride, pad, oh, ow):
    """Patch matrix (N, OH*OW, Ci*kh*kw); out-of-image taps stay zero."""
    n, ci, h, w = x.shape
    cols = np.zeros((n, oh * ow, ci * kh * kw), dtype=x.dtype)
    for b in nb.prange(n):
        for r in range(oh):
            for q in range(ow):
                po = r * ow + q
                for cin in range(ci):
                    base = cin * kh * kw
                    for i in range(kh):
                        ih = r * stride - pad + i
                        if ih < 0 or ih >= h:
                            continue
                        row = base + i * kw
                        for j in range(kw):
                            iw = q * stride - pad + j
                            if 0 <= iw < w:
                                cols[b, po, row + j] = x[b, cin, ih, iw]
    return cols


@nb.njit(cache=True, parallel=True)
def conv2d_fwd(x, w, stride, pad):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    wf = np.ascontiguousarray(w.reshape(co, ci * kh * kw).T)
    y = np.empty((n, co, oh, ow), dtype=x.dtype)
    for b in nb.prange(n):
        prod = np.dot(cols[b], wf)  # (OH*OW, Co)
        for c in range(co):
            for r in range(oh):
                for q in range(ow):
                    y[b, c, r, q] = prod[r * ow + q, c]
    return y


@nb.njit(cache=True, parallel=True)
def conv2d_bwd_x(gy, w, stride, pad, h, wd):
    n, co, oh, ow = gy.shape
    _, ci, kh, kw = w.shape
    wf = np.ascontiguousarray(w.reshape(co, ci * kh * kw))
    gx = np.zeros((n, ci, h, wd), dtype=gy.dtype)
    for b in nb.prange(n):
        gyb = np.ascontiguousarray(gy[b].reshape(co, oh * ow).T)
        prod = np.dot(gyb, wf)  # (OH*OW, Ci*kh*kw)
        for r in range(oh):
            for q in range(ow):
                po = r * ow + q
                for cin in range(ci):
                    base = cin * kh * kw
                    for i in range(kh):
                        ih = r * stride - pad + i
                        if ih < 0 or ih >= h:
                            continue
                        row = base + i * kw
                        for j in range(kw):
                            iw = q * stride - pad + j
                            if 0 <= iw < wd:
                                gx[b, cin, ih, iw] += prod[po, row + j]
    return gx


@nb.njit(cache=True)
def conv2d_bwd_w(x, gy, kh, kw, stride, pad):
    n, ci, h, wd = x.shape
    _, co, oh, ow = gy.shape
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    gw = np.zeros((co, ci * kh * kw), dtype=gy.dtype)
    for b in range(n):
        gw += np.dot(gy[b].reshape(co, oh * ow), cols[b])
    return gw.reshape(co, ci, kh, kw).copy()


@nb.njit(cache=True, parallel=True)
def roi_align_fwd(feat, rois, out_size):
    n, c, h, w = feat.shape
    r = rois.shape[0]
    s = out_size
    out = np.zeros((r, c, s, s), dtype=feat.dtype)
    for ri in nb.prange(r):
        b = int(rois[ri, 0])
        x0 = rois[ri, 1]
        y0 = rois[ri, 2]
        x1 = rois[ri, 3]
        y1 = rois[ri, 4]
        for i in range(s):
            sy = y0 + (i + 0.5) / s * (y1 - y0)
            if sy < 0.0:
                sy = 0.0
            elif sy > h - 1.0:
                sy = h - 1.0
            ylo = min(int(sy), h - 2)
            if ylo < 0:
                ylo = 0
            fy = sy - ylo
            for j in range(s):
                sx = x0 + (j + 0.5) / s * (x1 - x0)
                if sx < 0.0:
                    sx = 0.0
                elif sx > w - 1.0:
                    sx = w - 1.0
                xlo = min(int(sx), w - 2)
                if xlo < 0:
                    xlo = 0
                fx = sx - xlo
                w00 = (1 - fy) * (1 - fx)
                w01 = (1 - fy) * fx
                w10 = fy * (1 - fx)
                w11 = fy * fx
                for ch in range(c):
                    f = feat[b, ch]
                    out[ri, ch, i, j] = (w00 * f[ylo, xlo] + w01 * f[ylo, xlo + 1]
                                         + w10 * f[ylo + 1, xlo]
                                         + w11 * f[ylo + 1, xlo + 1])
    return out


@nb.njit(cache=True, parallel=True)
def roi_align_bwd(gy, rois, n, h, w):
    r, c, s, _ = gy.shape
    gfeat = np.zeros((n, c, h, w), dtype=gy.dtype)
    # parallel over channels: each thread owns a full channel plane, so
    # overlapping rois never race
    for ch in nb.prange(c):
        for ri in range(r):
            b = int(rois[ri, 0])
            x0 = rois[ri, 1]
            y0 = rois[ri, 2]
            x1 = rois[ri, 3]
            y1 = rois[ri, 4]
            for i in range(s):
                sy = y0 + (i + 0.5) / s * (y1 - y0)
                if sy < 0.0:
                    sy = 0.0
                elif sy > h - 1.0:
                    sy = h - 1.0
                ylo = min(int(sy), h - 2)
                if ylo < 0:
                    ylo = 0
                fy = sy - ylo
                for j in range(s):
                    sx = x0 + (j + 0.5) / s * (x1 - x0)
                    if sx < 0.0:
                        sx = 0.0
                    elif sx > w - 1.0:
                        sx = w - 1.0
                    xlo = min(int(sx), w - 2)
                    if xlo < 0:
                        xlo = 0
                    fx = sx - xlo
                    g = gy[ri, ch, i, j]
                    gfeat[b, ch, ylo, xlo] += g * (1 - fy) * (1 - fx)
                    gfeat[b, ch, ylo, xlo + 1] += g * (1 - fy) * fx
                    gfeat[b, ch, ylo + 1, xlo] += g * fy * (1 - fx)
                    gfeat[b, ch, ylo + 1, xlo + 1] += g * fy * fx
    return gfeat
