#include "musedit/nn/optim.hpp"

#include <cmath>
#include <numeric>

namespace musedit::nn {

Adam::Adam(ParamStore& params, std::vector<int> ids, double lr, double beta1,
           double beta2, double eps, double weight_decay)
    : params_(params),
      ids_(std::move(ids)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (int id : ids_) {
    ME_CHECK(id >= 0 && id < params.count(), "Adam: bad param id");
    m_.push_back(Mat::Zero(params.value(id).rows(), params.value(id).cols()));
    v_.push_back(Mat::Zero(params.value(id).rows(), params.value(id).cols()));
  }
}

Adam::Adam(ParamStore& params, double lr, double beta1, double beta2, double eps,
           double weight_decay)
    : Adam(params,
           [&] {
             std::vector<int> all(params.count());
             std::iota(all.begin(), all.end(), 0);
             return all;
           }(),
           lr, beta1, beta2, eps, weight_decay) {}

void Adam::step(const GradSink& grads) {
  ME_CHECK(grads.count() == params_.count(), "Adam: grad count mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t j = 0; j < ids_.size(); ++j) {
    const int id = ids_[j];
    const Mat& gmat = grads.grad(id);
    Mat& p = params_.value(id);
    m_[j] = beta1_ * m_[j] + (1.0 - beta1_) * gmat;
    v_[j] = beta2_ * v_[j] + (1.0 - beta2_) * gmat.cwiseProduct(gmat);
    if (weight_decay_ > 0.0) p -= lr_ * weight_decay_ * p;
    p.array() -= lr_ * (m_[j].array() / bc1) /
                 ((v_[j].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace musedit::nn
