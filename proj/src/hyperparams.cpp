#include "ccrr/hyperparams.hpp"

#include <stdexcept>

namespace ccrr {

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kSoftmax: return "softmax";
    case AttentionMode::kRaw: return "raw";
    case AttentionMode::kLiteral: return "literal";
  }
  return "softmax";
}

AttentionMode attention_mode_from_string(const std::string& text) {
  if (text == "softmax") return AttentionMode::kSoftmax;
  if (text == "raw") return AttentionMode::kRaw;
  if (text == "literal") return AttentionMode::kLiteral;
  throw std::invalid_argument("unknown attention mode \"" + text + "\"");
}

void Hyperparams::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("hyperparams: " + msg); };
  if (K < 1) fail("K must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (n < 1) fail("n must be >= 1");
  if (D < 1 || hidden < 1 || gcn_out < 1) fail("layer widths must be >= 1");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(bn_eps > 0.0)) fail("bn_eps must be > 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must lie in [0, 1]");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (train_protocol != "standard" && train_protocol != "cc") fail("train_protocol must be standard or cc");
}

void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = nlohmann::json{
      {"K", h.K},
      {"gamma", h.gamma},
      {"n", h.n},
      {"D", h.D},
      {"hidden", h.hidden},
      {"gcn_out", h.gcn_out},
      {"epsilon", h.epsilon},
      {"dropout", h.dropout},
      {"bn_eps", h.bn_eps},
      {"bn_momentum", h.bn_momentum},
      {"attention", to_string(h.attention)},
      {"lr", h.lr},
      {"beta1", h.beta1},
      {"beta2", h.beta2},
      {"adam_eps", h.adam_eps},
      {"epochs", h.epochs},
      {"batch", h.batch},
      {"checkpoint_every", h.checkpoint_every},
      {"train_protocol", h.train_protocol},
      {"seed", h.seed},
  };
}

void from_json(const nlohmann::json& j, Hyperparams& h) {
  if (!j.is_object()) throw std::invalid_argument("hyperparams: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "K") h.K = v.get<int>();
    else if (key == "gamma") h.gamma = v.get<double>();
    else if (key == "n") h.n = v.get<int>();
    else if (key == "D") h.D = v.get<int>();
    else if (key == "hidden") h.hidden = v.get<int>();
    else if (key == "gcn_out") h.gcn_out = v.get<int>();
    else if (key == "epsilon") h.epsilon = v.get<double>();
    else if (key == "dropout") h.dropout = v.get<double>();
    else if (key == "bn_eps") h.bn_eps = v.get<double>();
    else if (key == "bn_momentum") h.bn_momentum = v.get<double>();
    else if (key == "attention") h.attention = attention_mode_from_string(v.get<std::string>());
    else if (key == "lr") h.lr = v.get<double>();
    else if (key == "beta1") h.beta1 = v.get<double>();
    else if (key == "beta2") h.beta2 = v.get<double>();
    else if (key == "adam_eps") h.adam_eps = v.get<double>();
    else if (key == "epochs") h.epochs = v.get<int>();
    else if (key == "batch") h.batch = v.get<int>();
    else if (key == "checkpoint_every") h.checkpoint_every = v.get<int>();
    else if (key == "seed") h.seed = v.get<std::uint64_t>();
    else if (key == "train_protocol") h.train_protocol = v.get<std::string>();
    else throw std::invalid_argument("hyperparams: unknown key \"" + key + "\"");
  }
}

void apply_override(Hyperparams& h, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key=value, got \"" + assignment + "\"");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  from_json(nlohmann::json{{key, value}}, h);
}

}  // namespace ccrr
