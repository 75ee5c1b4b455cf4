#include "hdmn/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hdmn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t product(const std::vector<int>& card) {
  std::size_t n = 1;
  for (int c : card) {
    if (c < 1) throw InternalError("discrete cardinality < 1");
    n *= static_cast<std::size_t>(c);
    if (n > (std::size_t(1) << 26))
      throw ModelError("discrete table too large to materialize");
  }
  return n;
}

// row-major strides, last variable fastest
std::vector<std::size_t> strides_of(const std::vector<int>& card) {
  std::vector<std::size_t> s(card.size());
  std::size_t acc = 1;
  for (int k = static_cast<int>(card.size()) - 1; k >= 0; --k) {
    s[k] = acc;
    acc *= static_cast<std::size_t>(card[k]);
  }
  return s;
}

// positions of xs (sorted) inside ys (sorted superset); -1 when absent
std::vector<int> positions_in(const std::vector<VarId>& xs,
                              const std::vector<VarId>& ys) {
  std::vector<int> pos(xs.size(), -1);
  std::size_t j = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    while (j < ys.size() && ys[j] < xs[i]) ++j;
    if (j < ys.size() && ys[j] == xs[i]) pos[i] = static_cast<int>(j);
  }
  return pos;
}

std::vector<VarId> sorted_union(const std::vector<VarId>& a,
                                const std::vector<VarId>& b) {
  std::vector<VarId> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

bool intersects(const std::vector<VarId>& a, const std::vector<VarId>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    if (a[i] < b[j]) ++i; else ++j;
  }
  return false;
}

// advances a mixed-radix tuple; returns false after the last one
bool odometer_next(std::vector<int>& tuple, const std::vector<int>& card) {
  for (int k = static_cast<int>(card.size()) - 1; k >= 0; --k) {
    if (++tuple[k] < card[k]) return true;
    tuple[k] = 0;
  }
  return false;
}

}  // namespace

double logsumexp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Eigen::MatrixXd psd_inverse(const Eigen::MatrixXd& m, double* logdet) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) {
    if (logdet) *logdet = 0.0;
    return Eigen::MatrixXd::Zero(0, 0);
  }
  if (n == 1) {
    double k = m(0, 0);
    double tol = 1e-8 * std::max(1.0, std::abs(k));
    if (k < -tol) throw DegeneratePotentialError("negative precision/covariance");
    if (k <= 1e-12 * std::max(1.0, std::abs(k)))
      throw DegeneratePotentialError("singular precision/covariance block");
    if (logdet) *logdet = std::log(k);
    Eigen::MatrixXd inv(1, 1);
    inv(0, 0) = 1.0 / k;
    return inv;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success)
    throw InternalError("eigendecomposition failed");
  Eigen::VectorXd lam = eig.eigenvalues();
  double lmax = std::max(1.0, lam.cwiseAbs().maxCoeff());
  double neg_tol = 1e-8 * lmax;
  double sing_tol = 1e-12 * lmax;
  double ld = 0.0;
  Eigen::VectorXd inv_lam(n);
  for (int k = 0; k < n; ++k) {
    if (lam(k) < -neg_tol)
      throw DegeneratePotentialError("matrix has a negative eigenvalue");
    if (lam(k) <= sing_tol)
      throw DegeneratePotentialError("singular precision/covariance block");
    ld += std::log(lam(k));
    inv_lam(k) = 1.0 / lam(k);
  }
  if (logdet) *logdet = ld;
  return eig.eigenvectors() * inv_lam.asDiagonal() *
         eig.eigenvectors().transpose();
}

// ---- HybridPotential basics ----

HybridPotential HybridPotential::zero(std::vector<VarId> dscope,
                                      std::vector<int> card,
                                      std::vector<VarId> cscope) {
  HybridPotential p;
  p.dscope = std::move(dscope);
  p.card = std::move(card);
  p.cscope = std::move(cscope);
  p.entries.assign(product(p.card), std::nullopt);
  return p;
}

bool HybridPotential::all_zero() const {
  for (const auto& e : entries)
    if (e.has_value()) return false;
  return true;
}

int HybridPotential::card_of(VarId v) const {
  auto it = std::lower_bound(dscope.begin(), dscope.end(), v);
  if (it == dscope.end() || *it != v)
    throw InternalError("variable not in discrete scope");
  return card[static_cast<std::size_t>(it - dscope.begin())];
}

bool HybridPotential::in_dscope(VarId v) const {
  return std::binary_search(dscope.begin(), dscope.end(), v);
}

bool HybridPotential::in_cscope(VarId v) const {
  return std::binary_search(cscope.begin(), cscope.end(), v);
}

std::size_t HybridPotential::index_of(std::span<const int> tuple) const {
  auto st = strides_of(card);
  std::size_t idx = 0;
  for (std::size_t k = 0; k < card.size(); ++k)
    idx += st[k] * static_cast<std::size_t>(tuple[k]);
  return idx;
}

std::vector<int> HybridPotential::tuple_of(std::size_t index) const {
  std::vector<int> tuple(card.size());
  for (int k = static_cast<int>(card.size()) - 1; k >= 0; --k) {
    tuple[k] = static_cast<int>(index % static_cast<std::size_t>(card[k]));
    index /= static_cast<std::size_t>(card[k]);
  }
  return tuple;
}

void HybridPotential::check_consistent() const {
  if (dscope.size() != card.size())
    throw InternalError("dscope/card size mismatch");
  if (!std::is_sorted(dscope.begin(), dscope.end()) ||
      std::adjacent_find(dscope.begin(), dscope.end()) != dscope.end())
    throw InternalError("discrete scope not sorted/unique");
  if (!std::is_sorted(cscope.begin(), cscope.end()) ||
      std::adjacent_find(cscope.begin(), cscope.end()) != cscope.end())
    throw InternalError("continuous scope not sorted/unique");
  if (entries.size() != product(card))
    throw InternalError("table size mismatch");
  const int m = cdim();
  for (const auto& e : entries) {
    if (!e) continue;
    if (e->h.size() != m || e->K.rows() != m || e->K.cols() != m)
      throw InternalError("K/h dimension mismatch");
  }
}

// ---- entry helpers ----

double entry_log_mass(const CanonicalGaussian& e) {
  const int m = static_cast<int>(e.h.size());
  if (m == 0) return e.g;
  double logdet = 0.0;
  Eigen::MatrixXd inv = psd_inverse(e.K, &logdet);
  double quad = e.h.dot(inv * e.h);
  return e.g + 0.5 * (m * kLog2Pi - logdet + quad);
}

GaussianMoments to_moments(const CanonicalGaussian& e) {
  GaussianMoments mo;
  double logdet = 0.0;
  mo.cov = psd_inverse(e.K, &logdet);
  mo.mean = mo.cov * e.h;
  const int m = static_cast<int>(e.h.size());
  mo.log_weight = e.g + 0.5 * (m * kLog2Pi - logdet + e.h.dot(mo.mean));
  return mo;
}

CanonicalGaussian from_moments(const GaussianMoments& mo) {
  CanonicalGaussian e;
  const int m = static_cast<int>(mo.mean.size());
  double logdet_cov = 0.0;
  e.K = psd_inverse(mo.cov, &logdet_cov);
  e.h = e.K * mo.mean;
  e.g = mo.log_weight - 0.5 * (m * kLog2Pi + logdet_cov + mo.mean.dot(e.h));
  return e;
}

// ---- multiply / divide ----

namespace {

// scalar-scope fast path: shift every live entry (ZERO scalar blanks it all)
HybridPotential multiply_scalar(const HybridPotential& p,
                                const std::optional<CanonicalGaussian>& s) {
  if (!s) return HybridPotential::zero(p.dscope, p.card, p.cscope);
  HybridPotential r = p;
  for (auto& e : r.entries)
    if (e) e->g += s->g;
  return r;
}

}  // namespace

HybridPotential multiply(const HybridPotential& a, const HybridPotential& b) {
  if (a.dscope.empty() && a.cscope.empty())
    return multiply_scalar(b, a.entries.empty() ? std::nullopt : a.entries[0]);
  if (b.dscope.empty() && b.cscope.empty())
    return multiply_scalar(a, b.entries.empty() ? std::nullopt : b.entries[0]);
  if (intersects(a.dscope, b.cscope) || intersects(a.cscope, b.dscope))
    throw ModelError("scope kind mismatch between potentials");

  HybridPotential r;
  r.dscope = sorted_union(a.dscope, b.dscope);
  r.cscope = sorted_union(a.cscope, b.cscope);
  r.card.resize(r.dscope.size());
  {
    auto pa = positions_in(r.dscope, a.dscope);
    auto pb = positions_in(r.dscope, b.dscope);
    for (std::size_t k = 0; k < r.dscope.size(); ++k) {
      int ca = -1, cb = -1;
      // positions_in maps r var -> its position in a/b scope
      auto ia = std::lower_bound(a.dscope.begin(), a.dscope.end(), r.dscope[k]);
      if (ia != a.dscope.end() && *ia == r.dscope[k])
        ca = a.card[static_cast<std::size_t>(ia - a.dscope.begin())];
      auto ib = std::lower_bound(b.dscope.begin(), b.dscope.end(), r.dscope[k]);
      if (ib != b.dscope.end() && *ib == r.dscope[k])
        cb = b.card[static_cast<std::size_t>(ib - b.dscope.begin())];
      if (ca >= 0 && cb >= 0 && ca != cb)
        throw ModelError("inconsistent domain sizes for shared variable");
      r.card[k] = ca >= 0 ? ca : cb;
    }
    (void)pa;
    (void)pb;
  }
  r.entries.assign(product(r.card), std::nullopt);

  // per-result-variable strides into the operand tables
  auto r_strides = strides_of(r.card);
  auto a_strides = strides_of(a.card);
  auto b_strides = strides_of(b.card);
  std::vector<std::size_t> a_step(r.dscope.size(), 0), b_step(r.dscope.size(), 0);
  for (std::size_t k = 0; k < r.dscope.size(); ++k) {
    auto ia = std::lower_bound(a.dscope.begin(), a.dscope.end(), r.dscope[k]);
    if (ia != a.dscope.end() && *ia == r.dscope[k])
      a_step[k] = a_strides[static_cast<std::size_t>(ia - a.dscope.begin())];
    auto ib = std::lower_bound(b.dscope.begin(), b.dscope.end(), r.dscope[k]);
    if (ib != b.dscope.end() && *ib == r.dscope[k])
      b_step[k] = b_strides[static_cast<std::size_t>(ib - b.dscope.begin())];
  }

  // continuous embedding positions
  auto ca_pos = positions_in(a.cscope, r.cscope);
  auto cb_pos = positions_in(b.cscope, r.cscope);
  const int m = r.cdim();

  std::vector<int> tuple(r.dscope.size(), 0);
  std::size_t ridx = 0;
  do {
    std::size_t aidx = 0, bidx = 0;
    for (std::size_t k = 0; k < tuple.size(); ++k) {
      aidx += a_step[k] * static_cast<std::size_t>(tuple[k]);
      bidx += b_step[k] * static_cast<std::size_t>(tuple[k]);
    }
    const auto& ea = a.entries[aidx];
    const auto& eb = b.entries[bidx];
    if (ea && eb) {
      CanonicalGaussian e;
      e.g = ea->g + eb->g;
      e.h = Eigen::VectorXd::Zero(m);
      e.K = Eigen::MatrixXd::Zero(m, m);
      for (std::size_t i = 0; i < ca_pos.size(); ++i) {
        e.h(ca_pos[i]) += ea->h(static_cast<int>(i));
        for (std::size_t j = 0; j < ca_pos.size(); ++j)
          e.K(ca_pos[i], ca_pos[j]) += ea->K(static_cast<int>(i), static_cast<int>(j));
      }
      for (std::size_t i = 0; i < cb_pos.size(); ++i) {
        e.h(cb_pos[i]) += eb->h(static_cast<int>(i));
        for (std::size_t j = 0; j < cb_pos.size(); ++j)
          e.K(cb_pos[i], cb_pos[j]) += eb->K(static_cast<int>(i), static_cast<int>(j));
      }
      r.entries[ridx] = std::move(e);
    }
    ++ridx;
  } while (odometer_next(tuple, r.card));
  return r;
}

HybridPotential divide(const HybridPotential& a, const HybridPotential& b) {
  auto dpos = positions_in(b.dscope, a.dscope);
  auto cpos = positions_in(b.cscope, a.cscope);
  for (int p : dpos)
    if (p < 0) throw InternalError("divisor discrete scope not contained");
  for (int p : cpos)
    if (p < 0) throw InternalError("divisor continuous scope not contained");

  HybridPotential r = a;
  auto a_strides = strides_of(a.card);
  auto b_strides = strides_of(b.card);
  std::vector<int> tuple(a.dscope.size(), 0);
  std::size_t aidx = 0;
  do {
    std::size_t bidx = 0;
    for (std::size_t k = 0; k < b.dscope.size(); ++k)
      bidx += b_strides[k] * static_cast<std::size_t>(tuple[static_cast<std::size_t>(dpos[k])]);
    auto& ea = r.entries[aidx];
    const auto& eb = b.entries[bidx];
    if (ea) {
      if (!eb)
        throw InternalError("division of a live entry by a ZERO entry");
      ea->g -= eb->g;
      for (std::size_t i = 0; i < cpos.size(); ++i) {
        ea->h(cpos[i]) -= eb->h(static_cast<int>(i));
        for (std::size_t j = 0; j < cpos.size(); ++j)
          ea->K(cpos[i], cpos[j]) -= eb->K(static_cast<int>(i), static_cast<int>(j));
      }
    }
    ++aidx;
  } while (odometer_next(tuple, a.card));
  (void)a_strides;
  return r;
}

// ---- marginalize ----

namespace {

// integrates out the continuous positions `elim_pos` (sorted) of one entry
CanonicalGaussian integrate_entry(const CanonicalGaussian& e,
                                  const std::vector<int>& elim_pos,
                                  const std::vector<int>& keep_pos) {
  const int ne = static_cast<int>(elim_pos.size());
  const int nk = static_cast<int>(keep_pos.size());
  Eigen::MatrixXd K_ee(ne, ne), K_ke(nk, ne), K_kk(nk, nk);
  Eigen::VectorXd h_e(ne), h_k(nk);
  for (int i = 0; i < ne; ++i) {
    h_e(i) = e.h(elim_pos[i]);
    for (int j = 0; j < ne; ++j) K_ee(i, j) = e.K(elim_pos[i], elim_pos[j]);
  }
  for (int i = 0; i < nk; ++i) {
    h_k(i) = e.h(keep_pos[i]);
    for (int j = 0; j < ne; ++j) K_ke(i, j) = e.K(keep_pos[i], elim_pos[j]);
    for (int j = 0; j < nk; ++j) K_kk(i, j) = e.K(keep_pos[i], keep_pos[j]);
  }
  double logdet = 0.0;
  Eigen::MatrixXd K_ee_inv = psd_inverse(K_ee, &logdet);
  CanonicalGaussian out;
  Eigen::MatrixXd W = K_ke * K_ee_inv;
  out.K = K_kk - W * K_ke.transpose();
  out.K = 0.5 * (out.K + out.K.transpose());  // re-symmetrize round-off
  out.h = h_k - W * h_e;
  out.g = e.g + 0.5 * (ne * kLog2Pi - logdet + h_e.dot(K_ee_inv * h_e));
  return out;
}

HybridPotential marginalize_continuous(const HybridPotential& p,
                                       const std::vector<VarId>& elim) {
  if (elim.empty()) return p;
  std::vector<int> elim_pos, keep_pos;
  std::vector<VarId> keep;
  for (std::size_t i = 0; i < p.cscope.size(); ++i) {
    if (std::binary_search(elim.begin(), elim.end(), p.cscope[i])) {
      elim_pos.push_back(static_cast<int>(i));
    } else {
      keep_pos.push_back(static_cast<int>(i));
      keep.push_back(p.cscope[i]);
    }
  }
  HybridPotential r;
  r.dscope = p.dscope;
  r.card = p.card;
  r.cscope = keep;
  r.entries.assign(p.entries.size(), std::nullopt);
  for (std::size_t i = 0; i < p.entries.size(); ++i)
    if (p.entries[i])
      r.entries[i] = integrate_entry(*p.entries[i], elim_pos, keep_pos);
  return r;
}

HybridPotential marginalize_discrete(const HybridPotential& p,
                                     const std::vector<VarId>& elim,
                                     WeakMarginalStats* stats) {
  if (elim.empty()) return p;
  HybridPotential r;
  r.cscope = p.cscope;
  std::vector<std::size_t> keep_idx;
  for (std::size_t k = 0; k < p.dscope.size(); ++k) {
    if (!std::binary_search(elim.begin(), elim.end(), p.dscope[k])) {
      r.dscope.push_back(p.dscope[k]);
      r.card.push_back(p.card[k]);
      keep_idx.push_back(k);
    }
  }
  std::size_t rsize = 1;
  for (int c : r.card) rsize *= static_cast<std::size_t>(c);
  std::vector<std::vector<const CanonicalGaussian*>> groups(rsize);

  auto r_strides = strides_of(r.card);
  std::vector<int> tuple(p.dscope.size(), 0);
  std::size_t pidx = 0;
  do {
    if (p.entries[pidx]) {
      std::size_t ridx = 0;
      for (std::size_t k = 0; k < keep_idx.size(); ++k)
        ridx += r_strides[k] * static_cast<std::size_t>(tuple[keep_idx[k]]);
      groups[ridx].push_back(&*p.entries[pidx]);
    }
    ++pidx;
  } while (odometer_next(tuple, p.card));

  const int m = p.cdim();
  r.entries.assign(rsize, std::nullopt);
  for (std::size_t ridx = 0; ridx < rsize; ++ridx) {
    const auto& members = groups[ridx];
    if (members.empty()) continue;
    if (members.size() == 1) {
      r.entries[ridx] = *members[0];
      continue;
    }
    if (m == 0) {
      std::vector<double> gs;
      gs.reserve(members.size());
      for (auto* e : members) gs.push_back(e->g);
      r.entries[ridx] = CanonicalGaussian::scalar(logsumexp(gs));
      continue;
    }
    // weak marginal: moment-match the surviving mixture
    if (stats) stats->collapses += 1;
    std::vector<GaussianMoments> mos;
    mos.reserve(members.size());
    std::vector<double> lw;
    for (auto* e : members) {
      mos.push_back(to_moments(*e));
      lw.push_back(mos.back().log_weight);
    }
    if (stats && !stats->lossy) {
      for (std::size_t i = 1; i < mos.size(); ++i) {
        double d = (mos[i].mean - mos[0].mean).cwiseAbs().maxCoeff() +
                   (mos[i].cov - mos[0].cov).cwiseAbs().maxCoeff();
        if (d > 1e-12 * (1.0 + mos[0].mean.cwiseAbs().maxCoeff() +
                         mos[0].cov.cwiseAbs().maxCoeff())) {
          stats->lossy = true;
          break;
        }
      }
    }
    double logW = logsumexp(lw);
    GaussianMoments mix;
    mix.log_weight = logW;
    mix.mean = Eigen::VectorXd::Zero(m);
    mix.cov = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> w(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      w[i] = std::exp(lw[i] - logW);
      mix.mean += w[i] * mos[i].mean;
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      Eigen::VectorXd d = mos[i].mean - mix.mean;
      mix.cov += w[i] * (mos[i].cov + d * d.transpose());
    }
    mix.cov = 0.5 * (mix.cov + mix.cov.transpose());
    r.entries[ridx] = from_moments(mix);
  }
  return r;
}

}  // namespace

HybridPotential marginalize(const HybridPotential& p,
                            std::span<const VarId> elim,
                            WeakMarginalStats* stats) {
  std::vector<VarId> delim, celim;
  for (VarId v : elim) {
    if (p.in_dscope(v)) delim.push_back(v);
    else if (p.in_cscope(v)) celim.push_back(v);
    else throw ParamError("marginalize: variable not in potential scope");
  }
  std::sort(delim.begin(), delim.end());
  std::sort(celim.begin(), celim.end());
  HybridPotential mid = marginalize_continuous(p, celim);
  return marginalize_discrete(mid, delim, stats);
}

// ---- condition ----

HybridPotential condition(const HybridPotential& p, const Evidence& ev) {
  // discrete selection
  std::vector<std::size_t> sel_idx;       // positions of observed discrete vars
  std::vector<int> sel_val;
  HybridPotential r;
  for (std::size_t k = 0; k < p.dscope.size(); ++k) {
    auto it = ev.discrete.find(p.dscope[k]);
    if (it != ev.discrete.end()) {
      if (it->second < 0 || it->second >= p.card[k])
        throw ParamError("discrete evidence value out of domain");
      sel_idx.push_back(k);
      sel_val.push_back(it->second);
    } else {
      r.dscope.push_back(p.dscope[k]);
      r.card.push_back(p.card[k]);
    }
  }
  // continuous instantiation
  std::vector<int> obs_pos, keep_pos;
  Eigen::VectorXd obs_val(0);
  {
    std::vector<double> vals;
    for (std::size_t i = 0; i < p.cscope.size(); ++i) {
      auto it = ev.continuous.find(p.cscope[i]);
      if (it != ev.continuous.end()) {
        obs_pos.push_back(static_cast<int>(i));
        vals.push_back(it->second);
      } else {
        keep_pos.push_back(static_cast<int>(i));
        r.cscope.push_back(p.cscope[i]);
      }
    }
    obs_val = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<int>(vals.size()));
  }

  std::size_t rsize = 1;
  for (int c : r.card) rsize *= static_cast<std::size_t>(c);
  r.entries.assign(rsize, std::nullopt);

  auto p_strides = strides_of(p.card);
  std::size_t base = 0;
  for (std::size_t k = 0; k < sel_idx.size(); ++k)
    base += p_strides[sel_idx[k]] * static_cast<std::size_t>(sel_val[k]);

  const int nk = static_cast<int>(keep_pos.size());
  const int no = static_cast<int>(obs_pos.size());
  std::vector<int> tuple(r.dscope.size(), 0);
  std::vector<std::size_t> kept_stride;
  for (std::size_t k = 0, j = 0; k < p.dscope.size(); ++k) {
    if (j < sel_idx.size() && sel_idx[j] == k) { ++j; continue; }
    kept_stride.push_back(p_strides[k]);
  }
  std::size_t ridx = 0;
  do {
    std::size_t pidx = base;
    for (std::size_t k = 0; k < tuple.size(); ++k)
      pidx += kept_stride[k] * static_cast<std::size_t>(tuple[k]);
    const auto& e = p.entries[pidx];
    if (e) {
      if (no == 0) {
        r.entries[ridx] = *e;
      } else {
        CanonicalGaussian out;
        Eigen::VectorXd h_o(no), h_k(nk);
        Eigen::MatrixXd K_oo(no, no), K_ko(nk, no), K_kk(nk, nk);
        for (int i = 0; i < no; ++i) {
          h_o(i) = e->h(obs_pos[i]);
          for (int j = 0; j < no; ++j) K_oo(i, j) = e->K(obs_pos[i], obs_pos[j]);
        }
        for (int i = 0; i < nk; ++i) {
          h_k(i) = e->h(keep_pos[i]);
          for (int j = 0; j < no; ++j) K_ko(i, j) = e->K(keep_pos[i], obs_pos[j]);
          for (int j = 0; j < nk; ++j) K_kk(i, j) = e->K(keep_pos[i], keep_pos[j]);
        }
        out.g = e->g + h_o.dot(obs_val) - 0.5 * obs_val.dot(K_oo * obs_val);
        out.h = h_k - K_ko * obs_val;
        out.K = K_kk;
        r.entries[ridx] = std::move(out);
      }
    }
    ++ridx;
  } while (odometer_next(tuple, r.card));
  return r;
}

// ---- rename ----

HybridPotential rename_scope(const HybridPotential& p,
                             const std::map<VarId, VarId>& id_map) {
  auto mapped = [&](VarId v) {
    auto it = id_map.find(v);
    return it == id_map.end() ? v : it->second;
  };
  // discrete: sort new ids, remember original positions
  std::vector<std::pair<VarId, std::size_t>> dperm;
  for (std::size_t k = 0; k < p.dscope.size(); ++k)
    dperm.emplace_back(mapped(p.dscope[k]), k);
  std::sort(dperm.begin(), dperm.end());
  std::vector<std::pair<VarId, int>> cperm;
  for (std::size_t i = 0; i < p.cscope.size(); ++i)
    cperm.emplace_back(mapped(p.cscope[i]), static_cast<int>(i));
  std::sort(cperm.begin(), cperm.end());

  HybridPotential r;
  for (auto& [v, k] : dperm) {
    r.dscope.push_back(v);
    r.card.push_back(p.card[k]);
  }
  for (auto& [v, i] : cperm) r.cscope.push_back(v);
  r.entries.assign(p.entries.size(), std::nullopt);

  auto p_strides = strides_of(p.card);
  const int m = p.cdim();
  std::vector<int> tuple(r.dscope.size(), 0);
  std::size_t ridx = 0;
  do {
    std::size_t pidx = 0;
    for (std::size_t k = 0; k < tuple.size(); ++k)
      pidx += p_strides[dperm[k].second] * static_cast<std::size_t>(tuple[k]);
    const auto& e = p.entries[pidx];
    if (e) {
      CanonicalGaussian out;
      out.g = e->g;
      out.h = Eigen::VectorXd::Zero(m);
      out.K = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        out.h(i) = e->h(cperm[static_cast<std::size_t>(i)].second);
        for (int j = 0; j < m; ++j)
          out.K(i, j) = e->K(cperm[static_cast<std::size_t>(i)].second,
                             cperm[static_cast<std::size_t>(j)].second);
      }
      r.entries[ridx] = std::move(out);
    }
    ++ridx;
  } while (odometer_next(tuple, r.card));
  return r;
}

// ---- normalization and marginal readers ----

double total_log_mass(const HybridPotential& p) {
  std::vector<double> ms;
  ms.reserve(p.entries.size());
  for (const auto& e : p.entries)
    if (e) ms.push_back(entry_log_mass(*e));
  return logsumexp(ms);
}

HybridPotential normalized(const HybridPotential& p) {
  double z = total_log_mass(p);
  if (z == kNegInf)
    throw InconsistentEvidenceError("normalizing an all-ZERO potential");
  HybridPotential r = p;
  for (auto& e : r.entries)
    if (e) e->g -= z;
  return r;
}

std::vector<double> discrete_marginal(const HybridPotential& p, VarId v) {
  if (!p.in_dscope(v)) throw ParamError("discrete_marginal: not in scope");
  std::vector<VarId> elim;
  for (VarId u : p.dscope)
    if (u != v) elim.push_back(u);
  for (VarId u : p.cscope) elim.push_back(u);
  HybridPotential m = marginalize(p, elim);
  std::vector<double> logs(m.entries.size(), kNegInf);
  for (std::size_t k = 0; k < m.entries.size(); ++k)
    if (m.entries[k]) logs[k] = m.entries[k]->g;
  double z = logsumexp(logs);
  if (z == kNegInf)
    throw InconsistentEvidenceError("marginal of an all-ZERO potential");
  std::vector<double> out(m.entries.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = logs[k] == kNegInf ? 0.0 : std::exp(logs[k] - z);
  return out;
}

GaussianMoments continuous_marginal(const HybridPotential& p, VarId v) {
  if (!p.in_cscope(v)) throw ParamError("continuous_marginal: not in scope");
  std::vector<VarId> elim;
  for (VarId u : p.dscope) elim.push_back(u);
  for (VarId u : p.cscope)
    if (u != v) elim.push_back(u);
  HybridPotential m = marginalize(p, elim);
  for (const auto& e : m.entries)
    if (e) return to_moments(*e);
  throw InconsistentEvidenceError("marginal of an all-ZERO potential");
}

double max_param_diff(const HybridPotential& a, const HybridPotential& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.dscope != b.dscope || a.cscope != b.cscope || a.card != b.card)
    return kInf;
  double ga = kNegInf, gb = kNegInf;
  for (const auto& e : a.entries)
    if (e) ga = std::max(ga, e->g);
  for (const auto& e : b.entries)
    if (e) gb = std::max(gb, e->g);
  if ((ga == kNegInf) != (gb == kNegInf)) return kInf;
  double d = 0.0;
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    const auto& ea = a.entries[k];
    const auto& eb = b.entries[k];
    if (ea.has_value() != eb.has_value()) return kInf;
    if (!ea) continue;
    d = std::max(d, std::abs((ea->g - ga) - (eb->g - gb)));
    if (ea->h.size() != eb->h.size()) return kInf;
    if (ea->h.size() > 0) {
      d = std::max(d, (ea->h - eb->h).cwiseAbs().maxCoeff());
      d = std::max(d, (ea->K - eb->K).cwiseAbs().maxCoeff());
    }
  }
  return d;
}

}  // namespace hdmn
