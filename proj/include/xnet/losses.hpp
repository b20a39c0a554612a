#pragma once

#include <cmath>
#include <string>

#include "xnet/networks.hpp"

namespace xnet {

struct LossWeights {
  double gan = 1.0;
  double id = 3.0;
  double ctc = 3.0;
  double zid = 6.0;
  double zcyc = 6.0;

  void validate() const {
    const std::pair<const char*, double> all[] = {
        {"lambda_gan", gan}, {"lambda_id", id}, {"lambda_ctc", ctc}, {"lambda_zid", zid},
        {"lambda_zcyc", zcyc}};
    for (const auto& [name, v] : all) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(name) + " must be a finite non-negative number, got " +
                          std::to_string(v));
      }
    }
  }
};

/// Per-term switches used by the ablation grid.
struct LossTerms {
  bool gan = true;
  bool id = true;
  bool ctc = true;
  bool zid = true;
  bool zcyc = true;

  static LossTerms none() { return {false, false, false, false, false}; }
};

struct LossReport {
  double gan_g = 0.0;  // sum of both generator-side adversarial terms
  double gan_d = 0.0;  // sum of both discriminator losses
  double id = 0.0;
  double ctc = 0.0;
  double zid = 0.0;
  double zcyc = 0.0;
  double total = 0.0;  // weighted generator objective
};

/// Weighted generator objective from term values; disabled terms contribute 0.
inline double weighted_total(const LossWeights& w, const LossReport& r) {
  return w.gan * r.gan_g + w.id * r.id + w.ctc * r.ctc + w.zid * r.zid + w.zcyc * r.zcyc;
}

// Latent cross-identity: D_a(T_ba(E_ab(x_a))) ~ x_a and D_b(T_ab(E_ba(x_b))) ~ x_b.
template <typename T>
BasicTensor<T> loss_zid(const ModelBundle<T>& m, const BasicTensor<T>& x_a,
                        const BasicTensor<T>& x_b) {
  return add(l1_mean(cross_identity_a(m, x_a).image, x_a),
             l1_mean(cross_identity_b(m, x_b).image, x_b));
}

// Identity without cross-translation; domain-A images go through the B->A
// generator and vice versa.
template <typename T>
BasicTensor<T> loss_id(const ModelBundle<T>& m, const BasicTensor<T>& x_a,
                       const BasicTensor<T>& x_b) {
  return add(l1_mean(plain_identity_a(m, x_a).image, x_a),
             l1_mean(plain_identity_b(m, x_b).image, x_b));
}

// Latent cross-translation consistency, in latent space:
// T_ab(E_ba(x_a)) ~ E_ab(x_a) and T_ba(E_ab(x_b)) ~ E_ba(x_b).
template <typename T>
BasicTensor<T> loss_ctc(const ModelBundle<T>& m, const BasicTensor<T>& x_a,
                        const BasicTensor<T>& x_b) {
  const BasicTensor<T> ab_a = m.e_ab->forward(x_a);
  const BasicTensor<T> ba_a = m.e_ba->forward(x_a);
  const BasicTensor<T> ab_b = m.e_ab->forward(x_b);
  const BasicTensor<T> ba_b = m.e_ba->forward(x_b);
  return add(l1_mean(m.t_ab->forward(ba_a), ab_a), l1_mean(m.t_ba->forward(ab_b), ba_b));
}

// Latent cycle: T_ab(T_ba(z_b)) ~ z_b and T_ba(T_ab(z_a)) ~ z_a.
template <typename T>
BasicTensor<T> loss_zcyc(const ModelBundle<T>& m, const BasicTensor<T>& z_a,
                         const BasicTensor<T>& z_b) {
  return add(l1_mean(m.t_ab->forward(m.t_ba->forward(z_b)), z_b),
             l1_mean(m.t_ba->forward(m.t_ab->forward(z_a)), z_a));
}

/// Least-squares generator term: mean((Q(fake) - 1)^2).
template <typename T>
BasicTensor<T> loss_gan_generator(const Module<T>& q, const BasicTensor<T>& fake) {
  return sq_mean(q.forward(fake), T(1));
}

/// Least-squares discriminator term, halved. `fake` is detached here.
template <typename T>
BasicTensor<T> loss_gan_discriminator(const Module<T>& q, const BasicTensor<T>& real,
                                      const BasicTensor<T>& fake) {
  return scale(add(sq_mean(q.forward(real), T(1)), sq_mean(q.forward(detach(fake)), T(0))),
               T(0.5));
}

template <typename T>
struct GeneratorObjective {
  BasicTensor<T> total;
  LossReport report;
  BasicTensor<T> fake_a;  // D_a(E_ba(x_b))
  BasicTensor<T> fake_b;  // D_b(E_ab(x_a))
};

/// Weighted generator objective. Each encoder/input pair is evaluated once
/// and shared by every term that needs it; terms whose switch is off or whose
/// weight is zero are not evaluated at all.
///
/// The cycle term binds z_b = E_ab(x_a) and z_a = E_ba(x_b), the latents of
/// the regular translation paths.
template <typename T>
GeneratorObjective<T> total_generator_loss(const ModelBundle<T>& m, const BasicTensor<T>& x_a,
                                           const BasicTensor<T>& x_b, const LossWeights& w,
                                           const LossTerms& on = {}) {
  w.validate();
  const bool use_gan = on.gan && w.gan > 0.0;
  const bool use_id = on.id && w.id > 0.0;
  const bool use_ctc = on.ctc && w.ctc > 0.0;
  const bool use_zid = on.zid && w.zid > 0.0;
  const bool use_zcyc = on.zcyc && w.zcyc > 0.0;

  GeneratorObjective<T> out;
  BasicTensor<T> z_b = m.e_ab->forward(x_a);  // E_ab(x_a)
  BasicTensor<T> z_a = m.e_ba->forward(x_b);  // E_ba(x_b)
  BasicTensor<T> e_ab_xb, e_ba_xa;
  if (use_id || use_ctc) {
    e_ab_xb = m.e_ab->forward(x_b);
    e_ba_xa = m.e_ba->forward(x_a);
  }

  BasicTensor<T> total = BasicTensor<T>::scalar(T(0));
  auto accumulate = [&](const BasicTensor<T>& term, double weight, double& slot) {
    slot = static_cast<double>(term.item());
    total = add(total, scale(term, static_cast<T>(weight)));
  };

  out.fake_b = m.d_b->forward(z_b);
  out.fake_a = m.d_a->forward(z_a);
  if (use_gan) {
    accumulate(add(loss_gan_generator(*m.q_b, out.fake_b), loss_gan_generator(*m.q_a, out.fake_a)),
               w.gan, out.report.gan_g);
  }
  if (use_id) {
    accumulate(add(l1_mean(m.d_a->forward(e_ba_xa), x_a), l1_mean(m.d_b->forward(e_ab_xb), x_b)),
               w.id, out.report.id);
  }
  if (use_ctc) {
    accumulate(add(l1_mean(m.t_ab->forward(e_ba_xa), z_b), l1_mean(m.t_ba->forward(e_ab_xb), z_a)),
               w.ctc, out.report.ctc);
  }
  BasicTensor<T> t_ba_zb, t_ab_za;
  if (use_zid || use_zcyc) {
    t_ba_zb = m.t_ba->forward(z_b);
    t_ab_za = m.t_ab->forward(z_a);
  }
  if (use_zid) {
    accumulate(add(l1_mean(m.d_a->forward(t_ba_zb), x_a), l1_mean(m.d_b->forward(t_ab_za), x_b)),
               w.zid, out.report.zid);
  }
  if (use_zcyc) {
    accumulate(add(l1_mean(m.t_ab->forward(t_ba_zb), z_b), l1_mean(m.t_ba->forward(t_ab_za), z_a)),
               w.zcyc, out.report.zcyc);
  }
  out.report.total = weighted_total(w, out.report);
  out.total = total;
  return out;
}

}  // namespace xnet
