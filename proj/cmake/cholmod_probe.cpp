// Factorizes a 3-D Laplacian with the CHOLMOD supernodal method and exits
// nonzero when the factorization or a residual check fails.
#include <cholmod.h>
#include <cmath>

int main(void) {
    cholmod_common c;
    cholmod_start(&c);
    c.supernodal = CHOLMOD_SUPERNODAL;
    c.print = 0;
    const int m = 20, n = m * m * m;
    cholmod_triplet* t = cholmod_allocate_triplet(n, n, 4 * n, -1, CHOLMOD_REAL, &c);
    int* ti = static_cast<int*>(t->i);
    int* tj = static_cast<int*>(t->j);
    double* tx = static_cast<double*>(t->x);
    int k = 0;
    for (int z = 0; z < m; ++z)
        for (int y = 0; y < m; ++y)
            for (int x = 0; x < m; ++x) {
                const int i = x + m * (y + m * z);
                ti[k] = i; tj[k] = i; tx[k] = 6.1; ++k;
                if (x + 1 < m) { ti[k] = i + 1; tj[k] = i; tx[k] = -1.0; ++k; }
                if (y + 1 < m) { ti[k] = i + m; tj[k] = i; tx[k] = -1.0; ++k; }
                if (z + 1 < m) { ti[k] = i + m * m; tj[k] = i; tx[k] = -1.0; ++k; }
            }
    t->nnz = k;
    cholmod_sparse* a = cholmod_triplet_to_sparse(t, k, &c);
    cholmod_factor* l = cholmod_analyze(a, &c);
    cholmod_factorize(a, l, &c);
    bool ok = c.status == CHOLMOD_OK && l->minor == static_cast<size_t>(n);
    if (ok) {
        cholmod_dense* b = cholmod_ones(n, 1, CHOLMOD_REAL, &c);
        cholmod_dense* x = cholmod_solve(CHOLMOD_A, l, b, &c);
        double one[2] = {1, 0}, minus[2] = {-1, 0};
        cholmod_dense* r = cholmod_copy_dense(b, &c);
        cholmod_sdmult(a, 0, minus, one, x, r, &c);
        ok = cholmod_norm_dense(r, 2, &c) < 1e-10 * std::sqrt(static_cast<double>(n));
    }
    cholmod_finish(&c);
    return ok ? 0 : 1;
}
