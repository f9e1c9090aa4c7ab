#include <cmath>
#include <random>

#include "deepsum/errors.hpp"
#include "deepsum/model.hpp"

namespace deepsum {
namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor zeros(std::size_t n, double fill = 0.0) { return Tensor::parameter(Shape{n}, std::vector<double>(n, fill)); }

void add_conv2d(ParameterSet& ps, const std::string& name, std::size_t k, std::size_t cin, std::size_t cout,
                bool with_bias, std::mt19937_64& rng) {
  ps.add(name + "/kernel", glorot({k, k, cin, cout}, k * k * cin, k * k * cout, rng));
  if (with_bias) ps.add(name + "/bias", zeros(cout));
}

void add_conv3d(ParameterSet& ps, const std::string& name, std::size_t kd, std::size_t k, std::size_t cin,
                std::size_t cout, bool with_bias, std::mt19937_64& rng) {
  ps.add(name + "/kernel", glorot({kd, k, k, cin, cout}, kd * k * k * cin, kd * k * k * cout, rng));
  if (with_bias) ps.add(name + "/bias", zeros(cout));
}

bool is_fixed(const std::string& name) { return name.rfind("stats/", 0) == 0 || name.rfind("meta/", 0) == 0; }

}  // namespace

void ModelConfig::validate() const {
  if (n_images < 2) throw ConfigError("model needs at least 2 input images");
  if (r < 1) throw ConfigError("model r must be at least 1");
  if (features < 1 || regnet_first_channels < 1) throw ConfigError("channel counts must be positive");
  if (filter_size % 2 == 0) throw ConfigError("filter_size K must be odd");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (sisr_layers < 1 || regnet_2d_layers < 1) throw ConfigError("layer counts must be positive");
  if (temporal_kernel < 2 || fusion_layers * (temporal_kernel - 1) != n_images - 1) {
    throw ConfigError("fusion_layers * (temporal_kernel - 1) must equal n_images - 1 (got " +
                      std::to_string(fusion_layers) + " * " + std::to_string(temporal_kernel - 1) +
                      " vs " + std::to_string(n_images - 1) + ")");
  }
  if (!(residual_std > 0.0)) throw ConfigError("residual_std must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in [0, 1)");
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config_ = config;
  std::mt19937_64 rng(seed);
  auto& ps = p.tensors_;
  const std::size_t f = config.features, k = config.conv_kernel;

  for (std::size_t l = 0; l < config.sisr_layers; ++l) {
    add_conv2d(ps, "sisr/conv" + std::to_string(l), k, l == 0 ? 1 : f, f, false, rng);
  }
  add_conv2d(ps, "sisr/proj", k, f, 1, true, rng);

  add_conv3d(ps, "regnet/pair", 2, k, f, config.regnet_first_channels, true, rng);
  for (std::size_t l = 0; l < config.regnet_2d_layers; ++l) {
    add_conv2d(ps, "regnet/conv" + std::to_string(l), k, l == 0 ? config.regnet_first_channels : f, f, true, rng);
  }
  add_conv2d(ps, "regnet/out", k, f, config.classes(), true, rng);

  for (std::size_t l = 0; l < config.fusion_layers; ++l) {
    add_conv3d(ps, "fusion/conv" + std::to_string(l), config.temporal_kernel, k, f, f, false, rng);
  }
  add_conv2d(ps, "fusion/out", k, f, 1, true, rng);

  ps.add("stats/residual_mean", Tensor::scalar(config.residual_mean));
  ps.add("stats/residual_std", Tensor::scalar(config.residual_std));
  ps.add("meta/n_images", Tensor::scalar(static_cast<double>(config.n_images)));
  ps.add("meta/filter_size", Tensor::scalar(static_cast<double>(config.filter_size)));
  ps.add("meta/r", Tensor::scalar(static_cast<double>(config.r)));
  p.set_residual_stats(config.residual_mean, config.residual_std);
  return p;
}

ModelParams ModelParams::from_checkpoint(const ModelConfig& config, const ParameterSet& saved) {
  ModelParams p = init(config, 0);
  for (const auto& [name, tensor] : p.tensors_.entries()) {
    if (!saved.contains(name)) throw ConfigError("checkpoint lacks " + name + " " + shape_str(tensor.shape()));
    const Tensor& src = saved.at(name);
    if (src.shape() != tensor.shape()) {
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_str(src.shape()) + ", model expects " +
                        shape_str(tensor.shape()));
    }
    if (name.rfind("meta/", 0) == 0 && src.item() != tensor.item()) {
      throw ConfigError("checkpoint was trained with " + name.substr(5) + " = " + std::to_string(src.item()) +
                        ", config says " + std::to_string(tensor.item()));
    }
  }
  for (const auto& [name, tensor] : saved.entries()) {
    if (!p.tensors_.contains(name)) throw ConfigError("checkpoint has unexpected tensor " + name + " " + shape_str(tensor.shape()));
  }
  p.tensors_.assign_from(saved, "");
  p.config_.residual_mean = p.residual_mean();
  p.config_.residual_std = p.residual_std();
  return p;
}

std::vector<Tensor> ModelParams::trainable(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& [name, tensor] : tensors_.entries()) {
    if (!is_fixed(name) && name.rfind(prefix, 0) == 0) out.push_back(tensor);
  }
  return out;
}

double ModelParams::residual_mean() const { return tensors_.at("stats/residual_mean").item(); }
double ModelParams::residual_std() const { return tensors_.at("stats/residual_std").item(); }

void ModelParams::set_residual_stats(double mean, double std) {
  if (!(std > 0.0) || !std::isfinite(mean)) throw NumericError("invalid residual statistics");
  config_.residual_mean = mean;
  config_.residual_std = std;
  tensors_.at("stats/residual_mean").mutable_values()[0] = mean;
  tensors_.at("stats/residual_std").mutable_values()[0] = std;
  tensors_.at("fusion/out/bias").mutable_values()[0] = mean / std;
  tensors_.at("sisr/proj/bias").mutable_values()[0] = mean / std;
}

void ModelParams::copy_from(const ModelParams& other, const std::string& prefix) {
  tensors_.assign_from(other.tensors_, prefix);
}

}  // namespace deepsum
