#include "wfic/grid_path.hpp"

#include <cmath>
#include <utility>

#include "wfic/error.hpp"

namespace wfic {

GridBrownianPath::GridBrownianPath(double step, std::size_t dim, std::vector<double> values)
    : step_(step), dim_(dim), values_(std::move(values)) {
    if (!(step_ > 0.0) || dim_ == 0) throw DomainError("grid path: step must be positive and dim >= 1");
    if (values_.size() < dim_ || values_.size() % dim_ != 0) {
        throw ContractError("grid path: value count must be a positive multiple of dim");
    }
    for (std::size_t j = 0; j < dim_; ++j) {
        if (values_[j] != 0.0) throw ContractError("grid path: values at time 0 must be zero");
    }
}

GridBrownianPath GridBrownianPath::simulate(std::size_t dim, double horizon, double step, RandomState& rng) {
    if (!(horizon > 0.0)) throw DomainError("grid path: horizon must be positive");
    GridBrownianPath path(step, dim, std::vector<double>(dim, 0.0));
    path.extend(horizon, rng);
    return path;
}

void GridBrownianPath::extend(double horizon, RandomState& rng) {
    const auto target = static_cast<std::size_t>(std::ceil(horizon / step_ - 1e-9));
    if (target + 1 <= size()) return;
    const double scale = std::sqrt(step_);
    std::size_t i = size();
    values_.resize((target + 1) * dim_);
    for (; i <= target; ++i) {
        for (std::size_t j = 0; j < dim_; ++j) {
            values_[i * dim_ + j] = values_[(i - 1) * dim_ + j] + scale * rng.normal();
        }
    }
}

}  // namespace wfic
