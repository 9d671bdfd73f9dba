#pragma once

#include <cstddef>
#include <vector>

namespace zno::scan {

// Constrained filter coefficients for one layer, flattened over latent
// channels a < r and conjugate-pair index k < Kc (index a*Kc + k).
// Each pair (p, c) contributes 2*Re(c * s) to the readout; the optional real
// pole (K odd) contributes c_real * s_real with factor 1. The FIR branch
// covers lags 0..F with left zero padding.
template <typename Real>
struct Filters {
  int r = 0, Kc = 0, F = 0;
  bool has_real = false;
  std::vector<Real> p_re, p_im;  // [r*Kc]
  std::vector<Real> c_re, c_im;  // [r*Kc]
  std::vector<Real> p_real, c_real;  // [r]
  std::vector<Real> fir;  // [r*(F+1)] iff F > 0
};

// Forward scan over one trajectory.
//   bq, q:          [T][r]
//   s_re/s_im:      [T][r][Kc] state history, may be null
//   s_real:         [T][r], may be null
//   fin_*:          final states [r][Kc] / [r], may be null
// s_{-1} = 0. States stored at index n are the post-update s_n.
template <typename Real>
inline void forward_traj(int T, const Filters<Real>& f, const Real* bq,
                         Real* q, Real* s_re, Real* s_im, Real* s_real,
                         Real* fin_re, Real* fin_im, Real* fin_real) {
  const int r = f.r, Kc = f.Kc, F = f.F;
  const std::size_t rk = static_cast<std::size_t>(r) * Kc;
  std::vector<Real> st_re(rk, Real(0)), st_im(rk, Real(0));
  std::vector<Real> st_real(f.has_real ? r : 0, Real(0));

  for (int n = 0; n < T; ++n) {
    const Real* b_n = bq + static_cast<std::size_t>(n) * r;
    Real* q_n = q + static_cast<std::size_t>(n) * r;
    for (int a = 0; a < r; ++a) {
      const Real b = b_n[a];
      Real acc = Real(0);
      const std::size_t base = static_cast<std::size_t>(a) * Kc;
      for (int k = 0; k < Kc; ++k) {
        const std::size_t i = base + k;
        const Real pre = f.p_re[i], pim = f.p_im[i];
        const Real sre = pre * st_re[i] - pim * st_im[i] + b;
        const Real sim = pre * st_im[i] + pim * st_re[i];
        st_re[i] = sre;
        st_im[i] = sim;
        acc += Real(2) * (f.c_re[i] * sre - f.c_im[i] * sim);
        if (s_re) {
          const std::size_t h = (static_cast<std::size_t>(n) * r + a) * Kc + k;
          s_re[h] = sre;
          s_im[h] = sim;
        }
      }
      if (f.has_real) {
        const Real sr = f.p_real[a] * st_real[a] + b;
        st_real[a] = sr;
        acc += f.c_real[a] * sr;
        if (s_real) s_real[static_cast<std::size_t>(n) * r + a] = sr;
      }
      if (F > 0) {
        const Real* g = f.fir.data() + static_cast<std::size_t>(a) * (F + 1);
        const int jmax = n < F ? n : F;
        for (int j = 0; j <= jmax; ++j) {
          acc += g[j] * bq[static_cast<std::size_t>(n - j) * r + a];
        }
      }
      q_n[a] = acc;
    }
  }
  if (fin_re) {
    for (std::size_t i = 0; i < rk; ++i) {
      fin_re[i] = st_re[i];
      fin_im[i] = st_im[i];
    }
  }
  if (fin_real && f.has_real) {
    for (int a = 0; a < r; ++a) fin_real[a] = st_real[a];
  }
}

// Backward over one trajectory from the saved state history. One reverse
// sweep computes the adjoint state
//   lam_n = 2*conj(c)*q_bar_n + conj(p)*lam_{n+1}
// and accumulates, per pair,
//   d/dp += lam_n * conj(s_{n-1}),   d/dc += 2*q_bar_n*conj(s_n),
//   bq_bar_n += Re(lam_n).
// q_rec is the rational readout recomputed from the stored states (needed by
// the caller for the out-projection gradient). Coefficient gradients are
// accumulated (+=) into the gp/gc/gfir buffers.
template <typename Real>
inline void backward_traj_history(int T, const Filters<Real>& f,
                                  const Real* bq, const Real* q_bar,
                                  const Real* s_re, const Real* s_im,
                                  const Real* s_real, Real* bq_bar,
                                  Real* q_rec, Real* gp_re, Real* gp_im,
                                  Real* gc_re, Real* gc_im, Real* gp_real,
                                  Real* gc_real, Real* gfir) {
  const int r = f.r, Kc = f.Kc, F = f.F;
  const std::size_t rk = static_cast<std::size_t>(r) * Kc;
  std::vector<Real> lam_re(rk, Real(0)), lam_im(rk, Real(0));
  std::vector<Real> lam_real(f.has_real ? r : 0, Real(0));

  for (int n = T - 1; n >= 0; --n) {
    const Real* qb_n = q_bar + static_cast<std::size_t>(n) * r;
    for (int a = 0; a < r; ++a) {
      const Real qb = qb_n[a];
      Real bb = Real(0);
      Real qr = Real(0);
      const std::size_t base = static_cast<std::size_t>(a) * Kc;
      for (int k = 0; k < Kc; ++k) {
        const std::size_t i = base + k;
        const Real pre = f.p_re[i], pim = f.p_im[i];
        const Real lr = Real(2) * f.c_re[i] * qb + pre * lam_re[i] + pim * lam_im[i];
        const Real li = Real(-2) * f.c_im[i] * qb + pre * lam_im[i] - pim * lam_re[i];
        lam_re[i] = lr;
        lam_im[i] = li;
        const std::size_t h = (static_cast<std::size_t>(n) * r + a) * Kc + k;
        const Real sre = s_re[h], sim = s_im[h];
        Real spre = Real(0), spim = Real(0);
        if (n > 0) {
          const std::size_t hp = (static_cast<std::size_t>(n - 1) * r + a) * Kc + k;
          spre = s_re[hp];
          spim = s_im[hp];
        }
        gc_re[i] += Real(2) * qb * sre;
        gc_im[i] += Real(-2) * qb * sim;
        gp_re[i] += lr * spre + li * spim;
        gp_im[i] += li * spre - lr * spim;
        bb += lr;
        qr += Real(2) * (f.c_re[i] * sre - f.c_im[i] * sim);
      }
      if (f.has_real) {
        const Real lrr = f.c_real[a] * qb + f.p_real[a] * lam_real[a];
        lam_real[a] = lrr;
        const Real srn = s_real[static_cast<std::size_t>(n) * r + a];
        const Real srp = n > 0 ? s_real[static_cast<std::size_t>(n - 1) * r + a] : Real(0);
        gc_real[a] += qb * srn;
        gp_real[a] += lrr * srp;
        bb += lrr;
        qr += f.c_real[a] * srn;
      }
      if (F > 0) {
        const Real* g = f.fir.data() + static_cast<std::size_t>(a) * (F + 1);
        Real* gg = gfir + static_cast<std::size_t>(a) * (F + 1);
        for (int j = 0; j <= F; ++j) {
          if (n + j < T) bb += g[j] * q_bar[static_cast<std::size_t>(n + j) * r + a];
        }
        const int jmax = n < F ? n : F;
        for (int j = 0; j <= jmax; ++j) {
          const Real bj = bq[static_cast<std::size_t>(n - j) * r + a];
          gg[j] += qb * bj;
          qr += g[j] * bj;
        }
      }
      bq_bar[static_cast<std::size_t>(n) * r + a] = bb;
      q_rec[static_cast<std::size_t>(n) * r + a] = qr;
    }
  }
}

// Backward without state history: the reverse sweep produces the adjoint
// states exactly as above (it never touches s), then a forward sweep reruns
// the scan together with the pole sensitivity state t_n = p*t_{n-1} + s_{n-1}
// (so t_n = ds_n/dp), giving
//   d/dp = sum_n 2*q_bar_n*conj(c * t_n),   d/dc = sum_n 2*q_bar_n*conj(s_n).
// Two sequential passes, state memory independent of T.
template <typename Real>
inline void backward_traj_recompute(int T, const Filters<Real>& f,
                                    const Real* bq, const Real* q_bar,
                                    Real* bq_bar, Real* q_rec, Real* gp_re,
                                    Real* gp_im, Real* gc_re, Real* gc_im,
                                    Real* gp_real, Real* gc_real, Real* gfir) {
  const int r = f.r, Kc = f.Kc, F = f.F;
  const std::size_t rk = static_cast<std::size_t>(r) * Kc;

  {  // reverse sweep: adjoint states -> bq_bar
    std::vector<Real> lam_re(rk, Real(0)), lam_im(rk, Real(0));
    std::vector<Real> lam_real(f.has_real ? r : 0, Real(0));
    for (int n = T - 1; n >= 0; --n) {
      const Real* qb_n = q_bar + static_cast<std::size_t>(n) * r;
      for (int a = 0; a < r; ++a) {
        const Real qb = qb_n[a];
        Real bb = Real(0);
        const std::size_t base = static_cast<std::size_t>(a) * Kc;
        for (int k = 0; k < Kc; ++k) {
          const std::size_t i = base + k;
          const Real pre = f.p_re[i], pim = f.p_im[i];
          const Real lr = Real(2) * f.c_re[i] * qb + pre * lam_re[i] + pim * lam_im[i];
          const Real li = Real(-2) * f.c_im[i] * qb + pre * lam_im[i] - pim * lam_re[i];
          lam_re[i] = lr;
          lam_im[i] = li;
          bb += lr;
        }
        if (f.has_real) {
          const Real lrr = f.c_real[a] * qb + f.p_real[a] * lam_real[a];
          lam_real[a] = lrr;
          bb += lrr;
        }
        if (F > 0) {
          const Real* g = f.fir.data() + static_cast<std::size_t>(a) * (F + 1);
          for (int j = 0; j <= F; ++j) {
            if (n + j < T) bb += g[j] * q_bar[static_cast<std::size_t>(n + j) * r + a];
          }
        }
        bq_bar[static_cast<std::size_t>(n) * r + a] = bb;
      }
    }
  }

  {  // forward sweep: rerun the scan with the sensitivity state
    std::vector<Real> st_re(rk, Real(0)), st_im(rk, Real(0));
    std::vector<Real> t_re(rk, Real(0)), t_im(rk, Real(0));
    std::vector<Real> st_real(f.has_real ? r : 0, Real(0));
    std::vector<Real> t_real(f.has_real ? r : 0, Real(0));
    for (int n = 0; n < T; ++n) {
      const Real* b_n = bq + static_cast<std::size_t>(n) * r;
      const Real* qb_n = q_bar + static_cast<std::size_t>(n) * r;
      for (int a = 0; a < r; ++a) {
        const Real b = b_n[a];
        const Real qb = qb_n[a];
        Real qr = Real(0);
        const std::size_t base = static_cast<std::size_t>(a) * Kc;
        for (int k = 0; k < Kc; ++k) {
          const std::size_t i = base + k;
          const Real pre = f.p_re[i], pim = f.p_im[i];
          const Real sre0 = st_re[i], sim0 = st_im[i];
          const Real tre = pre * t_re[i] - pim * t_im[i] + sre0;
          const Real tim = pre * t_im[i] + pim * t_re[i] + sim0;
          t_re[i] = tre;
          t_im[i] = tim;
          const Real sre = pre * sre0 - pim * sim0 + b;
          const Real sim = pre * sim0 + pim * sre0;
          st_re[i] = sre;
          st_im[i] = sim;
          const Real cre = f.c_re[i], cim = f.c_im[i];
          // 2*qb*conj(c*t) and 2*qb*conj(s)
          gp_re[i] += Real(2) * qb * (cre * tre - cim * tim);
          gp_im[i] += Real(-2) * qb * (cre * tim + cim * tre);
          gc_re[i] += Real(2) * qb * sre;
          gc_im[i] += Real(-2) * qb * sim;
          qr += Real(2) * (cre * sre - cim * sim);
        }
        if (f.has_real) {
          const Real sr0 = st_real[a];
          const Real tr = f.p_real[a] * t_real[a] + sr0;
          t_real[a] = tr;
          const Real sr = f.p_real[a] * sr0 + b;
          st_real[a] = sr;
          gp_real[a] += qb * f.c_real[a] * tr;
          gc_real[a] += qb * sr;
          qr += f.c_real[a] * sr;
        }
        if (F > 0) {
          const Real* g = f.fir.data() + static_cast<std::size_t>(a) * (F + 1);
          Real* gg = gfir + static_cast<std::size_t>(a) * (F + 1);
          const int jmax = n < F ? n : F;
          for (int j = 0; j <= jmax; ++j) {
            const Real bj = bq[static_cast<std::size_t>(n - j) * r + a];
            gg[j] += qb * bj;
            qr += g[j] * bj;
          }
        }
        q_rec[static_cast<std::size_t>(n) * r + a] = qr;
      }
    }
  }
}

}  // namespace zno::scan

namespace zno::scan_ref {

// Plain reference forward scan, kept for tests and the benchmark. Same
// contract and per-element arithmetic order as scan::forward_traj, written
// as the obvious textbook loop.
template <typename Real>
inline void forward_traj(int T, const scan::Filters<Real>& f, const Real* bq,
                         Real* q) {
  const int r = f.r, Kc = f.Kc, F = f.F;
  std::vector<Real> sre(static_cast<std::size_t>(r) * Kc, Real(0));
  std::vector<Real> sim(static_cast<std::size_t>(r) * Kc, Real(0));
  std::vector<Real> sreal(f.has_real ? r : 0, Real(0));
  for (int n = 0; n < T; ++n) {
    for (int a = 0; a < r; ++a) {
      Real acc = Real(0);
      for (int k = 0; k < Kc; ++k) {
        const std::size_t i = static_cast<std::size_t>(a) * Kc + k;
        Real new_re = f.p_re[i] * sre[i] - f.p_im[i] * sim[i] + bq[static_cast<std::size_t>(n) * r + a];
        Real new_im = f.p_re[i] * sim[i] + f.p_im[i] * sre[i];
        sre[i] = new_re;
        sim[i] = new_im;
        acc += Real(2) * (f.c_re[i] * new_re - f.c_im[i] * new_im);
      }
      if (f.has_real) {
        sreal[a] = f.p_real[a] * sreal[a] + bq[static_cast<std::size_t>(n) * r + a];
        acc += f.c_real[a] * sreal[a];
      }
      if (F > 0) {
        for (int j = 0; j <= F && j <= n; ++j) {
          acc += f.fir[static_cast<std::size_t>(a) * (F + 1) + j] *
                 bq[static_cast<std::size_t>(n - j) * r + a];
        }
      }
      q[static_cast<std::size_t>(n) * r + a] = acc;
    }
  }
}

}  // namespace zno::scan_ref
