#include "smpcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace smpcl {

template <typename T>
GradCheckReport gradcheck(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> wrt,
                          const GradCheckOptions& options, const std::vector<std::string>& names) {
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<T> tape;
  Tensor<T> loss;
  {
    TapeScope<T> scope(tape);
    loss = fn();
  }
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  for (const auto& t : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), T(0));
    }
  }

  auto eval = [&] {
    NoGradScope<T> off;
    return static_cast<double>(fn().item());
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const T h = static_cast<T>(options.step);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto& t = wrt[k];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      auto data = t.mutable_data();
      const T saved = data[i];
      data[i] = saved + h;
      const double up = eval();
      data[i] = saved - h;
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[k][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        std::ostringstream os;
        os << (k < names.size() ? names[k] : "input" + std::to_string(k)) << '[' << i
           << "]: tape=" << a << " fd=" << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

template GradCheckReport gradcheck<float>(const std::function<Tensor<float>()>&,
                                          std::vector<Tensor<float>>, const GradCheckOptions&,
                                          const std::vector<std::string>&);
template GradCheckReport gradcheck<double>(const std::function<Tensor<double>()>&,
                                           std::vector<Tensor<double>>, const GradCheckOptions&,
                                           const std::vector<std::string>&);

}  // namespace smpcl
