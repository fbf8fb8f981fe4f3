#include "ordcfa/reparameterization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ordcfa/errors.hpp"

namespace ordcfa {

Reparameterization::Reparameterization(ModelSpec spec, ConstraintSet constraints)
    : spec_(std::move(spec)), cs_(std::move(constraints)) {
  const int p = spec_.item_count();
  const int m = spec_.factor_count();
  all_ = parameter_addresses(spec_);
  {
    int idx = 2 * p;
    for (int j = 0; j < p; ++j) {
      tau_start_.push_back(idx);
      idx += spec_.threshold_count(j);
    }
  }

  // derived quantities from nonlinear constraints
  derived_loading_.assign(m, -1);
  product_target_ = Eigen::VectorXd::Ones(m);
  theta_target_ = Eigen::VectorXd::Ones(p);
  int trv = 0;
  for (const auto& c : cs_.nonlinear) {
    if (c.kind == NonlinearKind::TotalResponseVariance) {
      theta_target_(c.index) = c.target;
      ++trv;
    } else {
      derived_loading_.at(c.index) = spec_.items_of(c.index).back();
      product_target_(c.index) = c.target;
    }
  }
  if (trv != 0 && trv != p)
    throw SpecError("total-variance constraints must cover every item");
  derived_theta_ = trv == p;

  // covariance block
  {
    std::set<ParamAddress> cov_fixed;
    std::map<int, double> diag_value;
    bool in_sum = false;
    for (const auto& f : cs_.fixes)
      if (f.address.kind == ParamKind::LatentCovariance) {
        cov_fixed.insert(f.address);
        if (f.address.row == f.address.col) diag_value[f.address.row] = f.value;
      }
    for (const auto& sm : cs_.sums)
      for (const auto& a : sm.addresses)
        if (a.kind == ParamKind::LatentCovariance) in_sum = true;
    const bool all_diag = static_cast<int>(diag_value.size()) == m &&
                          static_cast<int>(cov_fixed.size()) == m;
    if (!in_sum && cov_fixed.empty()) {
      cov_mode_ = CovarianceMode::Cholesky;
    } else if (!in_sum && all_diag) {
      cov_scale_.resize(m);
      bool positive = true;
      for (int q = 0; q < m; ++q) {
        positive = positive && diag_value[q] > 0.0;
        cov_scale_(q) = std::sqrt(std::max(diag_value[q], 0.0));
      }
      if (positive) cov_mode_ = CovarianceMode::Correlation;
    }
  }

  std::set<ParamAddress> derived;
  if (cov_mode_ != CovarianceMode::Affine)
    for (int q = 0; q < m; ++q)
      for (int r = 0; r <= q; ++r) derived.insert(addr::covariance(q, r));
  if (derived_theta_)
    for (int j = 0; j < p; ++j) derived.insert(addr::residual(j));
  for (int q = 0; q < m; ++q)
    if (derived_loading_[q] >= 0) derived.insert(addr::loading(derived_loading_[q], q));

  std::map<ParamAddress, int> lin_pos;
  for (std::size_t i = 0; i < all_.size(); ++i) {
    const auto& a = all_[i];
    if (a.kind == ParamKind::Threshold || derived.contains(a)) continue;
    lin_pos[a] = static_cast<int>(lin_.size());
    lin_.push_back(a);
    lin_canon_.push_back(static_cast<int>(i));
  }
  lin_dim_ = static_cast<int>(lin_.size());

  // threshold fixes per item
  items_.resize(p);
  std::vector<std::pair<std::vector<double>, double>> rows;
  for (const auto& f : cs_.fixes) {
    if (f.address.kind == ParamKind::LatentCovariance && cov_mode_ != CovarianceMode::Affine)
      continue;
    if (derived.contains(f.address))
      throw SpecError("constraint fixes a derived parameter " +
                      to_string(f.address));
    if (f.address.kind == ParamKind::Threshold) {
      auto& it = items_.at(f.address.row);
      it.fixed_index.push_back(f.address.col);
      it.fixed_value.push_back(f.value);
      continue;
    }
    std::vector<double> row(lin_dim_, 0.0);
    row[lin_pos.at(f.address)] = 1.0;
    rows.emplace_back(std::move(row), f.value);
  }
  for (const auto& s : cs_.sums) {
    std::vector<double> row(lin_dim_, 0.0);
    for (std::size_t k = 0; k < s.addresses.size(); ++k) {
      auto found = lin_pos.find(s.addresses[k]);
      if (found == lin_pos.end())
        throw SpecError("linear constraint on unsupported parameter " +
                        to_string(s.addresses[k]));
      row[found->second] += s.weights[k];
    }
    rows.emplace_back(std::move(row), s.target);
  }

  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), lin_dim_);
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < lin_dim_; ++c) A(r, c) = rows[r].first[c];
    b(r) = rows[r].second;
  }
  if (rows.empty()) {
    x0_ = Eigen::VectorXd::Zero(lin_dim_);
    N_ = Eigen::MatrixXd::Identity(lin_dim_, lin_dim_);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    x0_ = cod.solve(b);
    if ((A * x0_ - b).cwiseAbs().maxCoeff() > 1e-9)
      throw SpecError("linear constraints are inconsistent");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    const int k = lin_dim_ - static_cast<int>(lu.rank());
    if (k == 0) {
      N_.resize(lin_dim_, 0);
    } else {
      Eigen::MatrixXd K = lu.kernel();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(K);
      N_ = qr.householderQ() * Eigen::MatrixXd::Identity(lin_dim_, k);
      // clean rounding noise so fixed coordinates stay exactly fixed
      N_ = N_.unaryExpr([](double v) { return std::abs(v) < 1e-14 ? 0.0 : v; });
    }
  }

  // threshold segments
  int offset = static_cast<int>(N_.cols());
  for (int j = 0; j < p; ++j) {
    auto& it = items_[j];
    const int T = spec_.threshold_count(j);
    std::vector<std::pair<int, double>> fx;
    for (std::size_t k = 0; k < it.fixed_index.size(); ++k)
      fx.emplace_back(it.fixed_index[k], it.fixed_value[k]);
    std::sort(fx.begin(), fx.end());
    it.fixed_index.clear();
    it.fixed_value.clear();
    for (auto& [k, v] : fx) {
      if (k < 0 || k >= T) throw SpecError("threshold index out of range");
      if (!it.fixed_index.empty() && it.fixed_index.back() == k) continue;
      if (!it.fixed_value.empty() && !(v > it.fixed_value.back()))
        throw SpecError("fixed thresholds of item " + spec_.item(j).name +
                        " are not increasing");
      it.fixed_index.push_back(k);
      it.fixed_value.push_back(v);
    }
    if (it.fixed_index.empty()) {
      it.segments.push_back({Segment::Free, 0, T - 1, -1, -1, offset});
      offset += T;
      continue;
    }
    const int f0 = it.fixed_index.front();
    if (f0 > 0) {
      it.segments.push_back({Segment::Leading, 0, f0 - 1, -1, 0, offset});
      offset += f0;
    }
    for (std::size_t s = 0; s + 1 < it.fixed_index.size(); ++s) {
      const int a = it.fixed_index[s];
      const int c = it.fixed_index[s + 1];
      if (c - a > 1) {
        it.segments.push_back({Segment::Between, a + 1, c - 1,
                               static_cast<int>(s), static_cast<int>(s + 1),
                               offset});
        offset += c - a - 1;
      }
    }
    const int fl = it.fixed_index.back();
    if (fl < T - 1) {
      it.segments.push_back({Segment::Trailing, fl + 1, T - 1,
                             static_cast<int>(it.fixed_index.size()) - 1, -1,
                             offset});
      offset += T - 1 - fl;
    }
  }
  cov_offset_ = offset;
  if (cov_mode_ == CovarianceMode::Cholesky) offset += m * (m + 1) / 2;
  if (cov_mode_ == CovarianceMode::Correlation) offset += m * (m - 1) / 2;
  dim_ = offset;
}

ParameterSet Reparameterization::to_params(const Eigen::VectorXd& u) const {
  const int p = spec_.item_count();
  const int m = spec_.factor_count();
  ParameterSet ps = ParameterSet::defaults(spec_);
  const Eigen::Index k = N_.cols();
  Eigen::VectorXd x = x0_;
  if (k > 0) x += N_ * u.head(k);
  for (int i = 0; i < lin_dim_; ++i) ps.set(lin_[i], x(i));
  if (cov_mode_ == CovarianceMode::Cholesky) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
    int o = cov_offset_;
    for (int q = 0; q < m; ++q) {
      for (int r = 0; r < q; ++r) C(q, r) = u(o++);
      C(q, q) = std::exp(u(o++));
    }
    ps.phi = C * C.transpose();
  } else if (cov_mode_ == CovarianceMode::Correlation) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
    int o = cov_offset_;
    for (int q = 0; q < m; ++q) {
      for (int r = 0; r < q; ++r) L(q, r) = u(o++);
      L(q, q) = 1.0;
      L.row(q) /= L.row(q).norm();
    }
    ps.phi = cov_scale_.asDiagonal() * (L * L.transpose()) * cov_scale_.asDiagonal();
  }

  for (int q = 0; q < m; ++q) {
    const int last = derived_loading_[q];
    if (last < 0) continue;
    double prod = 1.0;
    for (int j : spec_.items_of(q))
      if (j != last) prod *= ps.lambda(j, q);
    ps.lambda(last, q) = product_target_(q) / prod;
  }
  if (derived_theta_)
    for (int j = 0; j < p; ++j) {
      const int q = spec_.factor_of(j);
      const double l = ps.lambda(j, q);
      ps.theta(j) = theta_target_(j) - l * l * ps.phi(q, q);
    }

  for (int j = 0; j < p; ++j) {
    const auto& it = items_[j];
    auto& tau = ps.thresholds[j];
    for (std::size_t s = 0; s < it.fixed_index.size(); ++s)
      tau(it.fixed_index[s]) = it.fixed_value[s];
    for (const auto& seg : it.segments) {
      const int o = seg.offset;
      switch (seg.kind) {
        case Segment::Free:
          tau(0) = u(o);
          for (int i = 1; i <= seg.last; ++i) tau(i) = tau(i - 1) + std::exp(u(o + i));
          break;
        case Segment::Leading:
          for (int i = seg.last; i >= 0; --i)
            tau(i) = tau(i + 1) - std::exp(u(o + i));
          break;
        case Segment::Trailing:
          for (int i = seg.first; i <= seg.last; ++i)
            tau(i) = tau(i - 1) + std::exp(u(o + i - seg.first));
          break;
        case Segment::Between: {
          const int r = seg.last - seg.first + 1;
          const double lo = it.fixed_value[seg.anchor_lo];
          const double S = it.fixed_value[seg.anchor_hi] - lo;
          Eigen::VectorXd c(r + 1);
          c(0) = 0.0;
          c.tail(r) = u.segment(o, r);
          const double mx = c.maxCoeff();
          Eigen::VectorXd w = (c.array() - mx).exp().matrix();
          w /= w.sum();
          double acc = 0.0;
          for (int i = 1; i <= r; ++i) {
            acc += w(i - 1);
            tau(seg.first + i - 1) = lo + S * acc;
          }
          break;
        }
      }
    }
  }

  for (const auto& f : cs_.fixes) ps.set(f.address, f.value);
  ps.fixed.clear();
  for (const auto& f : cs_.fixes) ps.fixed.insert(f.address);
  return ps;
}

Eigen::VectorXd Reparameterization::from_params(const ParameterSet& ps) const {
  Eigen::VectorXd u(dim_);
  const Eigen::Index k = N_.cols();
  Eigen::VectorXd x(lin_dim_);
  for (int i = 0; i < lin_dim_; ++i) x(i) = ps.get(lin_[i]);
  if (k > 0) u.head(k) = N_.transpose() * (x - x0_);
  const int m = spec_.factor_count();
  if (cov_mode_ != CovarianceMode::Affine) {
    Eigen::MatrixXd target = ps.phi;
    if (cov_mode_ == CovarianceMode::Correlation) {
      Eigen::VectorXd s = target.diagonal().cwiseMax(0.0).cwiseSqrt();
      for (int q = 0; q < m; ++q)
        if (!(s(q) > 0.0)) s(q) = 1.0;
      target = s.cwiseInverse().asDiagonal() * target * s.cwiseInverse().asDiagonal();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(target);
    if (llt.info() != Eigen::Success) {
      // pull an indefinite start back inside the cone
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(target);
      const double floor = 1e-6 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      target = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
               es.eigenvectors().transpose();
      llt.compute(target);
    }
    const Eigen::MatrixXd C = llt.matrixL();
    int o = cov_offset_;
    for (int q = 0; q < m; ++q) {
      if (cov_mode_ == CovarianceMode::Cholesky) {
        for (int r = 0; r < q; ++r) u(o++) = C(q, r);
        u(o++) = std::log(C(q, q));
      } else {
        for (int r = 0; r < q; ++r) u(o++) = C(q, r) / C(q, q);
      }
    }
  }
  for (int j = 0; j < spec_.item_count(); ++j) {
    const auto& it = items_[j];
    const auto& tau = ps.thresholds[j];
    for (const auto& seg : it.segments) {
      const int o = seg.offset;
      switch (seg.kind) {
        case Segment::Free:
          u(o) = tau(0);
          for (int i = 1; i <= seg.last; ++i) u(o + i) = std::log(tau(i) - tau(i - 1));
          break;
        case Segment::Leading: {
          const double anchor = it.fixed_value[seg.anchor_hi];
          for (int i = 0; i <= seg.last; ++i) {
            const double next = i == seg.last ? anchor : tau(i + 1);
            u(o + i) = std::log(next - tau(i));
          }
          break;
        }
        case Segment::Trailing: {
          const double anchor = it.fixed_value[seg.anchor_lo];
          for (int i = seg.first; i <= seg.last; ++i) {
            const double prev = i == seg.first ? anchor : tau(i - 1);
            u(o + i - seg.first) = std::log(tau(i) - prev);
          }
          break;
        }
        case Segment::Between: {
          const int r = seg.last - seg.first + 1;
          const double lo = it.fixed_value[seg.anchor_lo];
          const double g0 = tau(seg.first) - lo;
          for (int i = 1; i <= r; ++i) {
            const double left = tau(seg.first + i - 1);
            const double right = i == r ? it.fixed_value[seg.anchor_hi]
                                        : tau(seg.first + i);
            u(o + i - 1) = std::log((right - left) / g0);
          }
          break;
        }
      }
    }
  }
  return u;
}

bool Reparameterization::feasible(const ParameterSet& ps) const {
  if (!ps.nu.allFinite() || !ps.lambda.allFinite() || !ps.theta.allFinite() ||
      !ps.kappa.allFinite() || !ps.phi.allFinite())
    return false;
  for (int j = 0; j < spec_.item_count(); ++j) {
    const auto& t = ps.thresholds[j];
    if (!t.allFinite()) return false;
    for (Eigen::Index k = 1; k < t.size(); ++k)
      if (!(t(k) > t(k - 1))) return false;
    if (!(ps.theta(j) > 0.0)) return false;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(ps.phi);
  if (llt.info() != Eigen::Success) return false;
  for (Eigen::Index q = 0; q < ps.phi.rows(); ++q)
    if (!(llt.matrixL()(q, q) > 0.0)) return false;
  return true;
}

Eigen::VectorXd Reparameterization::pull_back(
    const ParameterSet& ps, const Eigen::VectorXd& full_gradient) const {
  const int p = spec_.item_count();
  const int m = spec_.factor_count();
  const int lam0 = p;
  const int theta0 = tau_start_.empty() ? 2 * p : tau_start_.back() + spec_.threshold_count(p - 1);
  const int phi0 = theta0 + p + m;
  auto cov = [&](int q, int r) {
    if (q < r) std::swap(q, r);
    return phi0 + q * (q + 1) / 2 + r;
  };
  Eigen::VectorXd g = full_gradient;
  if (derived_theta_)
    for (int j = 0; j < p; ++j) {
      const int q = spec_.factor_of(j);
      const double l = ps.lambda(j, q);
      const double gt = g(theta0 + j);
      g(lam0 + j) += gt * (-2.0 * l * ps.phi(q, q));
      g(cov(q, q)) += gt * (-l * l);
    }
  for (int q = 0; q < m; ++q) {
    const int last = derived_loading_[q];
    if (last < 0) continue;
    const double gl = g(lam0 + last);
    const double ll = ps.lambda(last, q);
    for (int j : spec_.items_of(q))
      if (j != last) g(lam0 + j) += gl * (-ll / ps.lambda(j, q));
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
  if (cov_mode_ != CovarianceMode::Affine) {
    // df = tr(Gs dPhi) for symmetric dPhi
    Eigen::MatrixXd Gs(m, m);
    for (int q = 0; q < m; ++q)
      for (int r = 0; r <= q; ++r) {
        const double v = q == r ? g(cov(q, q)) : 0.5 * g(cov(q, r));
        Gs(q, r) = v;
        Gs(r, q) = v;
      }
    int o = cov_offset_;
    if (cov_mode_ == CovarianceMode::Cholesky) {
      Eigen::LLT<Eigen::MatrixXd> llt(ps.phi);
      const Eigen::MatrixXd C = llt.matrixL();
      const Eigen::MatrixXd gC = 2.0 * Gs * C;
      for (int q = 0; q < m; ++q) {
        for (int r = 0; r < q; ++r) out(o++) = gC(q, r);
        out(o++) = gC(q, q) * C(q, q);
      }
    } else {
      const Eigen::VectorXd& s = cov_scale_;
      Eigen::MatrixXd R = s.cwiseInverse().asDiagonal() * ps.phi * s.cwiseInverse().asDiagonal();
      Eigen::LLT<Eigen::MatrixXd> llt(R);
      const Eigen::MatrixXd L = llt.matrixL();
      const Eigen::MatrixXd gL = 2.0 * s.asDiagonal() * Gs * s.asDiagonal() * L;
      for (int q = 0; q < m; ++q) {
        // row q of L is b / |b| with b = (u..., 1)
        const double bnorm = 1.0 / L(q, q);
        const Eigen::RowVectorXd lq = L.row(q).head(q + 1);
        const Eigen::RowVectorXd gq = gL.row(q).head(q + 1);
        const Eigen::RowVectorXd gb = (gq - gq.dot(lq) * lq) / bnorm;
        for (int r = 0; r < q; ++r) out(o++) = gb(r);
      }
    }
  }
  const Eigen::Index k = N_.cols();
  if (k > 0) {
    Eigen::VectorXd gl(lin_dim_);
    for (int i = 0; i < lin_dim_; ++i) gl(i) = g(lin_canon_[i]);
    out.head(k) = N_.transpose() * gl;
  }
  for (int j = 0; j < p; ++j) {
    const auto& it = items_[j];
    const auto& tau = ps.thresholds[j];
    const int T = spec_.threshold_count(j);
    Eigen::VectorXd gt = g.segment(tau_start_[j], T);
    for (const auto& seg : it.segments) {
      const int o = seg.offset;
      switch (seg.kind) {
        case Segment::Free: {
          out(o) = gt.sum();
          double tail = 0.0;
          for (int i = T - 1; i >= 1; --i) {
            tail += gt(i);
            out(o + i) = (tau(i) - tau(i - 1)) * tail;
          }
          break;
        }
        case Segment::Leading: {
          double head = 0.0;
          for (int i = 0; i <= seg.last; ++i) {
            head += gt(i);
            out(o + i) = -(tau(i + 1) - tau(i)) * head;
          }
          break;
        }
        case Segment::Trailing: {
          double tail = 0.0;
          for (int i = seg.last; i >= seg.first; --i) {
            tail += gt(i);
            out(o + i - seg.first) = (tau(i) - tau(i - 1)) * tail;
          }
          break;
        }
        case Segment::Between: {
          const int r = seg.last - seg.first + 1;
          const double lo = it.fixed_value[seg.anchor_lo];
          const double S = it.fixed_value[seg.anchor_hi] - lo;
          // w_l = gap_l / S, W_i = (tau_{first+i-1} - lo) / S
          Eigen::VectorXd w(r + 1);
          for (int l = 0; l <= r; ++l) {
            const double left = l == 0 ? lo : tau(seg.first + l - 1);
            const double right = l == r ? it.fixed_value[seg.anchor_hi] : tau(seg.first + l);
            w(l) = (right - left) / S;
          }
          for (int s = 1; s <= r; ++s) {
            double acc = 0.0;
            for (int i = 1; i <= r; ++i) {
              const double Wi = (tau(seg.first + i - 1) - lo) / S;
              acc += gt(seg.first + i - 1) * ((s < i ? 1.0 : 0.0) - Wi);
            }
            out(o + s - 1) = S * w(s) * acc;
          }
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace ordcfa
