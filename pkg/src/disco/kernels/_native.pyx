# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused MLP forward and the reverse-diffusion loop.

Same contract as disco.kernels.pyref; see that module for the semantics.
The packed net stores each weight matrix transposed (out, in) and flattened
so the inner matvec is a contiguous row dot product.
"""

from libc.math cimport tanh as ctanh
from libc.stdlib cimport free, malloc

BACKEND_NAME = "native"

cdef double GELU_C = 0.7978845608028654
cdef double GELU_A = 0.044715


cdef inline void _matvec(const double* wt, const double* b, const double* x,
                         double* y, Py_ssize_t n_out, Py_ssize_t n_in) noexcept nogil:
    # plain reduction loop: the build enables -fassociative-math for this
    # extension so the compiler is free to vectorize the dot product
    cdef Py_ssize_t j, i
    cdef double acc
    cdef const double* row
    for j in range(n_out):
        row = wt + j * n_in
        acc = 0.0
        for i in range(n_in):
            acc += row[i] * x[i]
        y[j] = b[j] + acc


cdef inline void _activate(double* y, Py_ssize_t n, int act_id) noexcept nogil:
    cdef Py_ssize_t j
    cdef double z, u
    if act_id == 0:
        for j in range(n):
            if y[j] < 0.0:
                y[j] = 0.0
    else:
        for j in range(n):
            z = y[j]
            u = GELU_C * (z + GELU_A * z * z * z)
            y[j] = 0.5 * z * (1.0 + ctanh(u))


cdef int _forward(const double* wt_flat, const double* b_flat,
                  const long long* in_sizes, const long long* out_sizes,
                  Py_ssize_t n_layers, int act_id,
                  const double* x, double* out,
                  double* buf_a, double* buf_b) noexcept nogil:
    """Run the layer chain; writes the final layer's output into ``out``."""
    cdef Py_ssize_t layer, w_off = 0, b_off = 0
    cdef const double* src = x
    cdef double* dst
    for layer in range(n_layers):
        dst = out if layer == n_layers - 1 else (buf_a if layer % 2 == 0 else buf_b)
        _matvec(wt_flat + w_off, b_flat + b_off, src, dst,
                out_sizes[layer], in_sizes[layer])
        if layer < n_layers - 1:
            _activate(dst, out_sizes[layer], act_id)
        w_off += in_sizes[layer] * out_sizes[layer]
        b_off += out_sizes[layer]
        src = dst
    return 0


def mlp_forward(net, const double[::1] x):
    """Forward through a packed net; ``x`` is the fully assembled input."""
    import numpy as np
    cdef const double[::1] wt = net.wt_flat
    cdef const double[::1] bf = net.b_flat
    cdef const long long[::1] ins = net.in_sizes
    cdef const long long[::1] outs = net.out_sizes
    cdef Py_ssize_t n_layers = ins.shape[0]
    cdef int act_id = net.activation_id
    out_arr = np.empty(outs[n_layers - 1], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t width = net.max_width
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    if buf_a == NULL or buf_b == NULL:
        free(buf_a); free(buf_b)
        raise MemoryError()
    try:
        with nogil:
            _forward(&wt[0], &bf[0], &ins[0], &outs[0], n_layers, act_id,
                     &x[0], &out[0], buf_a, buf_b)
    finally:
        free(buf_a)
        free(buf_b)
    return out_arr


def reverse_diffuse(net, const double[::1] obs_flat, const double[::1] x_init,
                    Py_ssize_t k_start, const double[:, ::1] embed,
                    const double[::1] scale, const double[::1] eps_coef,
                    const double[::1] sigma,
                    const double[:, ::1] step_noise,
                    const double[::1] sqrt_ab, const double[::1] sqrt_1mab,
                    Py_ssize_t n_inpaint, Py_ssize_t region_len,
                    const double[::1] seed_region,
                    const double[:, ::1] inpaint_noise):
    """Fused reverse-diffusion loop; see pyref.reverse_diffuse."""
    import numpy as np
    cdef const double[::1] wt = net.wt_flat
    cdef const double[::1] bf = net.b_flat
    cdef const long long[::1] ins = net.in_sizes
    cdef const long long[::1] outs = net.out_sizes
    cdef Py_ssize_t n_layers = ins.shape[0]
    cdef int act_id = net.activation_id
    cdef Py_ssize_t obs_len = obs_flat.shape[0]
    cdef Py_ssize_t seq_len = x_init.shape[0]
    cdef Py_ssize_t emb_dim = embed.shape[1]
    cdef Py_ssize_t in_dim = obs_len + seq_len + emb_dim

    x_arr = np.array(x_init, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    eps_arr = np.empty(seq_len, dtype=np.float64)
    cdef double[::1] eps = eps_arr

    cdef Py_ssize_t width = net.max_width
    if in_dim > width:
        width = in_dim
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    cdef double* inp = <double*> malloc(in_dim * sizeof(double))
    if buf_a == NULL or buf_b == NULL or inp == NULL:
        free(buf_a); free(buf_b); free(inp)
        raise MemoryError()

    cdef Py_ssize_t i, j, k, lvl
    cdef double s, c, sg
    try:
        with nogil:
            for j in range(obs_len):
                inp[j] = obs_flat[j]
            i = 0
            k = k_start
            while k >= 1:
                for j in range(seq_len):
                    inp[obs_len + j] = x[j]
                for j in range(emb_dim):
                    inp[obs_len + seq_len + j] = embed[k, j]
                _forward(&wt[0], &bf[0], &ins[0], &outs[0], n_layers, act_id,
                         inp, &eps[0], buf_a, buf_b)
                s = scale[k]
                c = eps_coef[k]
                sg = sigma[k]
                for j in range(seq_len):
                    x[j] = s * (x[j] - c * eps[j]) + sg * step_noise[i, j]
                if i < n_inpaint:
                    lvl = k - 1
                    for j in range(region_len):
                        x[j] = sqrt_ab[lvl] * seed_region[j] + sqrt_1mab[lvl] * inpaint_noise[i, j]
                i += 1
                k -= 1
    finally:
        free(buf_a)
        free(buf_b)
        free(inp)
    return x_arr
