#include "zdp/policy.hpp"

namespace zdp {

MlpPolicy::MlpPolicy(MlpParams params) : params_(std::move(params)) {
  params_.validate();
}

std::shared_ptr<const ZeroDynamicsPolicy> zero_policy(int gamma, int nz) {
  return std::make_shared<LinearPolicy>(MatrixXd::Zero(gamma, nz));
}

}  // namespace zdp
