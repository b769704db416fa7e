#include "lvae/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lvae/errors.hpp"

namespace lvae {

using nlohmann::json;

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("malformed JSON: ") + e.what());
  }
}

// Reads typed fields from an object and rejects anything it was not asked for.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw Error(ErrorCode::ConfigInvalid, where_ + " must be a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    auto fail = [&](const std::string& what) {
      return Error(ErrorCode::ConfigInvalid, where_ + "." + key + ": " + what);
    };
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw fail("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw fail("expected an integer");
      if (std::is_unsigned_v<T> && it->template get<long long>() < 0) throw fail("expected a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw fail("expected a number");
    } else {
      if (!it->is_string()) throw fail("expected a string");
    }
    out = it->template get<T>();
  }

  void reject_unknown() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw Error(ErrorCode::ConfigInvalid, where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

TrainConfig config_from(const json& j) {
  TrainConfig cfg;
  FieldReader r(j, "config");
  std::string method = to_string(cfg.method);
  std::string control = to_string(cfg.control);
  r.read("method", method);
  r.read("lambda", cfg.lambda);
  r.read("alpha", cfg.alpha);
  r.read("tau", cfg.tau);
  r.read("beta", cfg.beta);
  r.read("M", cfg.M);
  r.read("d_z", cfg.d_z);
  r.read("d_h", cfg.d_h);
  r.read("d_emb", cfg.d_emb);
  r.read("lr", cfg.lr);
  r.read("batch_size", cfg.batch_size);
  r.read("epochs", cfg.epochs);
  r.read("seed", cfg.seed);
  r.read("control", control);
  r.read("oracle_temperature", cfg.oracle_temperature);
  r.read("shared_embeddings", cfg.shared_embeddings);
  r.read("clip_norm", cfg.clip_norm);
  r.read("monitor_size", cfg.monitor_size);
  r.reject_unknown();
  cfg.method = method_from_string(method);
  cfg.control = control_policy_from_string(control);
  validate(cfg);
  return cfg;
}

json config_to(const TrainConfig& cfg) {
  json j;
  j["method"] = to_string(cfg.method);
  j["lambda"] = cfg.lambda;
  j["alpha"] = cfg.alpha;
  j["tau"] = cfg.tau;
  j["beta"] = cfg.beta;
  j["M"] = cfg.M;
  j["d_z"] = cfg.d_z;
  j["d_h"] = cfg.d_h;
  j["d_emb"] = cfg.d_emb;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["control"] = to_string(cfg.control);
  j["oracle_temperature"] = cfg.oracle_temperature;
  j["shared_embeddings"] = cfg.shared_embeddings;
  j["clip_norm"] = cfg.clip_norm;
  j["monitor_size"] = cfg.monitor_size;
  return j;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig train_config_from_json(const std::string& text) { return config_from(parse(text)); }

std::string train_config_to_json(const TrainConfig& cfg, int indent) {
  return config_to(cfg).dump(indent);
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_json(read_text_file(path));
}

SearchSpace search_space_from_json(const std::string& text) {
  const json j = parse(text);
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "search space must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "base" && k != "ranges") throw Error(ErrorCode::ConfigInvalid, "search space: unknown key '" + k + "'");
  SearchSpace space;
  if (j.contains("base")) space.base = config_from(j.at("base"));
  if (j.contains("ranges")) {
    if (!j.at("ranges").is_object()) throw Error(ErrorCode::ConfigInvalid, "ranges must be an object");
    for (const auto& [name, spec] : j.at("ranges").items()) {
      if (!spec.is_object() || spec.size() != 1)
        throw Error(ErrorCode::ConfigInvalid, "range '" + name + "' needs exactly one kind");
      const auto& [kind, bounds] = *spec.items().begin();
      SearchRange range;
      if (kind == "log_uniform") range.kind = SearchRange::Kind::LogUniform;
      else if (kind == "uniform") range.kind = SearchRange::Kind::Uniform;
      else if (kind == "int_uniform") range.kind = SearchRange::Kind::IntUniform;
      else throw Error(ErrorCode::ConfigInvalid, "range '" + name + "': unknown kind '" + kind + "'");
      if (!bounds.is_array() || bounds.size() != 2 || !bounds[0].is_number() || !bounds[1].is_number())
        throw Error(ErrorCode::ConfigInvalid, "range '" + name + "' needs [lo, hi]");
      range.lo = bounds[0].get<double>();
      range.hi = bounds[1].get<double>();
      if (range.hi < range.lo || (range.kind == SearchRange::Kind::LogUniform && range.lo <= 0.0))
        throw Error(ErrorCode::ConfigInvalid, "range '" + name + "' is empty or not positive");
      TrainConfig probe = space.base;
      set_config_field(probe, name, range.lo);  // rejects unknown names
      space.ranges[name] = range;
    }
  }
  return space;
}

SearchSpace load_search_space(const std::string& path) {
  return search_space_from_json(read_text_file(path));
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  const json j = parse(text);
  SyntheticSpec s;
  FieldReader r(j, "synthetic");
  r.read("classes", s.classes);
  r.read("templates_per_class", s.templates_per_class);
  r.read("noise", s.noise);
  r.read("n", s.n);
  r.read("seed", s.seed);
  r.read("prefix_length", s.prefix_length);
  r.read("body_min", s.body_min);
  r.read("body_max", s.body_max);
  r.read("words_per_class", s.words_per_class);
  r.read("slot_choices", s.slot_choices);
  r.read("slot_groups", s.slot_groups);
  r.read("n_pairs", s.n_pairs);
  r.reject_unknown();
  return s;
}

}  // namespace lvae
