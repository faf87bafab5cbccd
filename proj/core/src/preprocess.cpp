#include "seqseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqseg {

const std::array<double, 5>& gaussian_taps5() {
  static const std::array<double, 5> taps = [] {
    std::array<double, 5> t{};
    double norm = 0.0;
    for (int i = 0; i < 5; ++i) {
      const double x = static_cast<double>(i - 2);
      t[static_cast<std::size_t>(i)] = std::exp(-0.5 * x * x);
      norm += t[static_cast<std::size_t>(i)];
    }
    for (double& v : t) v /= norm;
    return t;
  }();
  return taps;
}

Tensor gaussian_blur5(const Tensor& channel) {
  if (channel.ndim() != 2) {
    throw std::invalid_argument("gaussian_blur5: expected [H,W], got " + shape_str(channel.shape()));
  }
  const int h = channel.dim(0), w = channel.dim(1);
  const auto& taps = gaussian_taps5();
  const auto& x = channel.data();
  auto clamp = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };

  // Separable passes; replicated edges clamp per axis, which matches the
  // full 5x5 kernel with replicated borders.
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) acc += taps[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(r) * w + clamp(c + i - 2, w)];
      tmp[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  std::vector<double> out(tmp.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) acc += taps[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(clamp(r + i - 2, h)) * w + c];
      out[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  return Tensor::from_data({h, w}, std::move(out));
}

Tensor standardize_normalize(const Tensor& channel) {
  if (channel.ndim() != 2) {
    throw std::invalid_argument("standardize_normalize: expected [H,W], got " + shape_str(channel.shape()));
  }
  const auto& x = channel.data();
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / n);

  std::vector<double> out(x.size(), 0.0);
  if (stddev > 0.0) {
    double max_abs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = (x[i] - mean) / stddev;
      max_abs = std::max(max_abs, std::abs(out[i]));
    }
    for (double& v : out) v /= max_abs;
  }
  return Tensor::from_data(channel.shape(), std::move(out));
}

Tensor preprocess_image(const Tensor& image) {
  if (image.ndim() != 3) {
    throw std::invalid_argument("preprocess_image: expected [C,H,W], got " + shape_str(image.shape()));
  }
  const int cn = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(image.size());
  for (int c = 0; c < cn; ++c) {
    std::vector<double> ch(image.data().begin() + c * plane, image.data().begin() + (c + 1) * plane);
    Tensor conditioned = standardize_normalize(gaussian_blur5(Tensor::from_data({h, w}, std::move(ch))));
    std::copy(conditioned.data().begin(), conditioned.data().end(), out.begin() + c * plane);
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

}  // namespace seqseg
