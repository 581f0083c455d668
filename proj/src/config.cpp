#include "fedcvar/config.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fedcvar/error.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar::exp {
namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json* node, std::string path, std::vector<std::string>& defaulted)
      : node_(node), path_(std::move(path)), defaulted_(defaulted) {
    if (node_ != nullptr && !node_->is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  bool has(const std::string& k) {
    seen_.insert(k);
    return node_ != nullptr && node_->contains(k);
  }

  const json& raw(const std::string& k) const { return node_->at(k); }

  Section child(const std::string& k) {
    const bool present = has(k);
    return Section(present ? &raw(k) : nullptr, key(k), defaulted_);
  }

  double number(const std::string& k, double fallback) {
    if (!has(k)) return defaulted(k, fallback);
    const json& v = raw(k);
    if (!v.is_number()) throw ConfigError(key(k), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(key(k), "must be finite");
    return x;
  }

  std::uint64_t unsigned_int(const std::string& k, std::uint64_t fallback) {
    if (!has(k)) return defaulted(k, fallback);
    const json& v = raw(k);
    if (!v.is_number_integer()) throw ConfigError(key(k), "expected a non-negative integer");
    if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError(key(k), "must be non-negative");
    return v.get<std::uint64_t>();
  }

  std::size_t size(const std::string& k, std::size_t fallback) {
    return static_cast<std::size_t>(unsigned_int(k, fallback));
  }

  std::string string(const std::string& k, const std::string& fallback) {
    if (!has(k)) return defaulted(k, fallback);
    const json& v = raw(k);
    if (!v.is_string()) throw ConfigError(key(k), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& k, bool fallback) {
    if (!has(k)) return defaulted(k, fallback);
    const json& v = raw(k);
    if (!v.is_boolean()) throw ConfigError(key(k), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_array()) throw ConfigError(key(k), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(key(k), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> sizes(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_array()) throw ConfigError(key(k), "expected an array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0)
        throw ConfigError(key(k), "expected an array of positive integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  void mark_default(const std::string& k) { defaulted_.push_back(key(k)); }

  /// Rejects every key that was never asked for.
  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [k, v] : node_->items()) {
      if (!seen_.count(k)) throw ConfigError(key(k), "unknown key");
    }
  }

 private:
  template <class T>
  T defaulted(const std::string& k, T fallback) {
    defaulted_.push_back(key(k));
    return fallback;
  }

  const json* node_;
  std::string path_;
  std::vector<std::string>& defaulted_;
  std::set<std::string> seen_;
};

DatasetKind parse_dataset_kind(const std::string& s, const std::string& key) {
  if (s == "synthetic2d") return DatasetKind::Synthetic2D;
  if (s == "mnist") return DatasetKind::Mnist;
  if (s == "fashion_mnist") return DatasetKind::FashionMnist;
  throw ConfigError(key, "expected one of synthetic2d, mnist, fashion_mnist");
}

RamKind parse_ram_kind(const std::string& s, const std::string& key) {
  if (s == "explicit") return RamKind::Explicit;
  if (s == "geometric") return RamKind::Geometric;
  if (s == "tail_three") return RamKind::TailThree;
  throw ConfigError(key, "expected one of explicit, geometric, tail_three");
}

void parse_dataset(Section s, DatasetConfig& d) {
  d.kind = parse_dataset_kind(s.string("kind", "synthetic2d"), s.key("kind"));
  const bool synthetic = d.kind == DatasetKind::Synthetic2D;
  d.num_classes = s.size("num_classes", synthetic ? 3 : 10);
  if (d.num_classes < 2) throw ConfigError(s.key("num_classes"), "must be at least 2");

  if (synthetic) {
    d.per_class = s.size("per_class", d.per_class);
    d.test_per_class = s.size("test_per_class", d.test_per_class);
    d.spread = s.number("spread", d.spread);
    d.radius = s.number("radius", d.radius);
    if (s.has("center")) {
      auto c = s.numbers("center");
      if (c.size() != 2) throw ConfigError(s.key("center"), "expected two numbers");
      d.center = {c[0], c[1]};
    } else {
      s.mark_default("center");
    }
    d.seed = s.unsigned_int("seed", d.seed);
    d.test_seed = s.unsigned_int("test_seed", d.test_seed);
    if (d.per_class == 0) throw ConfigError(s.key("per_class"), "must be positive");
    if (d.test_per_class == 0) throw ConfigError(s.key("test_per_class"), "must be positive");
    if (!(d.spread > 0.0)) throw ConfigError(s.key("spread"), "must be positive");
  } else {
    d.dir = s.string("dir", d.kind == DatasetKind::Mnist ? "mnist-subset" : "fashion-mnist");
    d.train_images = s.string("train_images", d.train_images);
    d.train_labels = s.string("train_labels", d.train_labels);
    d.test_images = s.string("test_images", d.test_images);
    d.test_labels = s.string("test_labels", d.test_labels);
    d.train_limit = s.size("train_limit", 0);
    d.test_limit = s.size("test_limit", 0);
  }
  s.finish();
}

void parse_ram(Section s, RamConfig& r) {
  r.kind = parse_ram_kind(s.string("kind", "explicit"), s.key("kind"));
  if (r.kind == RamKind::Explicit) {
    if (!s.has("weights")) throw ConfigError(s.key("weights"), "required for kind explicit");
    r.weights = s.numbers("weights");
  } else {
    r.param = s.number("param", r.kind == RamKind::TailThree ? 0.8 : 0.5);
  }
  s.finish();
}

template <class F>
void checked(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

void validate(const ExperimentConfig& cfg) {
  const std::size_t K = cfg.partition.num_users;
  checked("partition", [&] { cfg.partition.validate(cfg.dataset.num_classes); });
  checked("ram", [&] {
    const auto w = resolve_ram_weights(cfg);
    if (w.size() != K)
      throw ConfigError("ram.weights", "expected " + std::to_string(K) + " weights (one per user), got " +
                                           std::to_string(w.size()));
    (void)ram::make_ram(w);
  });
  checked("model", [&] { resolve_arch(cfg).validate(); });
  checked("risk.alpha", [&] {
    if (!(cfg.train.risk.alpha > 0.0 && cfg.train.risk.alpha <= 1.0))
      throw ConfigError("risk.alpha", "must lie in (0, 1]");
  });
  checked("risk.gamma", [&] {
    if (!(cfg.train.risk.gamma >= 0.0 && cfg.train.risk.gamma <= 1.0))
      throw ConfigError("risk.gamma", "must lie in [0, 1]");
  });
  checked("train", [&] {
    auto t = cfg.train;
    t.arch = resolve_arch(cfg);
    t.validate();
  });
  if (cfg.eval.every == 0) throw ConfigError("eval.every", "must be positive");
  if (cfg.eval.summary_points == 0) throw ConfigError("eval.summary_points", "must be positive");
  if (cfg.eval.smoothing_window == 0) throw ConfigError("eval.smoothing_window", "must be positive");
}

}  // namespace

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Synthetic2D: return "synthetic2d";
    case DatasetKind::Mnist: return "mnist";
    case DatasetKind::FashionMnist: return "fashion_mnist";
  }
  return "?";
}

const char* to_string(RamKind kind) {
  switch (kind) {
    case RamKind::Explicit: return "explicit";
    case RamKind::Geometric: return "geometric";
    case RamKind::TailThree: return "tail_three";
  }
  return "?";
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  Section root(&doc, "", cfg.defaulted);
  cfg.name = root.string("name", cfg.name);
  cfg.description = root.string("description", "");

  parse_dataset(root.child("dataset"), cfg.dataset);

  {
    Section s = root.child("partition");
    cfg.partition.num_users = s.size("num_users", 2);
    cfg.partition.frequent_fraction = s.number("frequent_percent", 90.0);
    cfg.partition.frequent_pattern_fraction = s.number("frequent_pattern_percent", 90.0);
    cfg.partition.seed = s.unsigned_int("seed", 0);
    s.finish();
  }

  parse_ram(root.child("ram"), cfg.ram);

  {
    Section s = root.child("model");
    const std::string kind = s.string("kind", "logreg");
    if (kind == "logreg") {
      cfg.model = ModelKind::LogReg;
    } else if (kind == "mlp2") {
      cfg.model = ModelKind::Mlp2;
      if (s.has("hidden")) {
        cfg.hidden = s.sizes("hidden");
      } else {
        s.mark_default("hidden");
        cfg.hidden = {64, 64};
      }
    } else {
      throw ConfigError(s.key("kind"), "expected logreg or mlp2");
    }
    s.finish();
  }

  {
    Section s = root.child("train");
    auto& t = cfg.train;
    t.global_rounds = s.size("rounds", 100);
    t.local_epochs = s.size("local_epochs", 1);
    t.batch_size = s.size("batch_size", 64);
    t.lr_theta = s.number("lr_theta", 1e-3);
    t.lr_t = s.number("lr_t", 1e-4);
    t.t_init = s.number("t_init", 0.0);
    t.workers = s.size("workers", 1);
    t.relayed_only = s.boolean("relayed_only", false);
    s.finish();
  }

  {
    Section s = root.child("risk");
    cfg.train.risk.alpha = s.number("alpha", 1.0);
    cfg.train.risk.gamma = s.number("gamma", 1.0);
    s.finish();
  }

  {
    Section s = root.child("seeds");
    cfg.train.seeds.init = s.unsigned_int("init", 1);
    cfg.train.seeds.ram = s.unsigned_int("ram", 2);
    cfg.train.seeds.shuffle = s.unsigned_int("shuffle", 3);
    s.finish();
  }

  {
    Section s = root.child("eval");
    cfg.eval.every = s.size("every", 25);
    cfg.eval.summary_points = s.size("summary_points", 1);
    cfg.eval.smoothing_window = s.size("smoothing_window", 50);
    cfg.eval.charts = s.boolean("charts", true);
    s.finish();
  }

  {
    Section s = root.child("output");
    cfg.output_dir = s.string("dir", "");
    s.finish();
  }

  root.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config_text(ss.str());
  cfg.source_dir = std::filesystem::absolute(path).parent_path();
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["description"] = cfg.description;

  const auto& d = cfg.dataset;
  json ds{{"kind", to_string(d.kind)}, {"num_classes", d.num_classes}};
  if (d.kind == DatasetKind::Synthetic2D) {
    ds["per_class"] = d.per_class;
    ds["test_per_class"] = d.test_per_class;
    ds["spread"] = d.spread;
    ds["radius"] = d.radius;
    ds["center"] = {d.center[0], d.center[1]};
    ds["seed"] = d.seed;
    ds["test_seed"] = d.test_seed;
  } else {
    ds["dir"] = d.dir;
    ds["train_images"] = d.train_images;
    ds["train_labels"] = d.train_labels;
    ds["test_images"] = d.test_images;
    ds["test_labels"] = d.test_labels;
    ds["train_limit"] = d.train_limit;
    ds["test_limit"] = d.test_limit;
  }
  j["dataset"] = ds;

  j["partition"] = {{"num_users", cfg.partition.num_users},
                    {"frequent_percent", cfg.partition.frequent_fraction},
                    {"frequent_pattern_percent", cfg.partition.frequent_pattern_fraction},
                    {"seed", cfg.partition.seed}};

  json r{{"kind", to_string(cfg.ram.kind)}};
  if (cfg.ram.kind == RamKind::Explicit) {
    r["weights"] = cfg.ram.weights;
  } else {
    r["param"] = cfg.ram.param;
  }
  j["ram"] = r;

  json m{{"kind", cfg.model == ModelKind::LogReg ? "logreg" : "mlp2"}};
  if (cfg.model == ModelKind::Mlp2) m["hidden"] = cfg.hidden;
  j["model"] = m;

  const auto& t = cfg.train;
  j["train"] = {{"rounds", t.global_rounds}, {"local_epochs", t.local_epochs},
                {"batch_size", t.batch_size}, {"lr_theta", t.lr_theta},
                {"lr_t", t.lr_t},           {"t_init", t.t_init},
                {"workers", t.workers},     {"relayed_only", t.relayed_only}};
  j["risk"] = {{"alpha", t.risk.alpha}, {"gamma", t.risk.gamma}};
  j["seeds"] = {{"init", t.seeds.init}, {"ram", t.seeds.ram}, {"shuffle", t.seeds.shuffle}};
  j["eval"] = {{"every", cfg.eval.every},
               {"summary_points", cfg.eval.summary_points},
               {"smoothing_window", cfg.eval.smoothing_window},
               {"charts", cfg.eval.charts}};
  j["output"] = {{"dir", cfg.output_dir}};
  return j;
}

ModelArch resolve_arch(const ExperimentConfig& cfg) {
  const std::size_t d =
      cfg.dataset.kind == DatasetKind::Synthetic2D ? 2 : static_cast<std::size_t>(28 * 28);
  if (cfg.model == ModelKind::LogReg) return ModelArch::logreg(d, cfg.dataset.num_classes);
  return ModelArch::mlp(d, cfg.hidden, cfg.dataset.num_classes);
}

std::vector<double> resolve_ram_weights(const ExperimentConfig& cfg) {
  switch (cfg.ram.kind) {
    case RamKind::Explicit: return cfg.ram.weights;
    case RamKind::Geometric:
      return ram::skewed_weights(cfg.partition.num_users, ram::SkewKind::Geometric, cfg.ram.param);
    case RamKind::TailThree:
      return ram::skewed_weights(cfg.partition.num_users, ram::SkewKind::TailThree, cfg.ram.param);
  }
  return {};
}

void apply_seed(ExperimentConfig& cfg, std::uint64_t base) {
  cfg.train.seeds.init = derive_seed({base, 1});
  cfg.train.seeds.ram = derive_seed({base, 2});
  cfg.train.seeds.shuffle = derive_seed({base, 3});
  cfg.partition.seed = derive_seed({base, 4});
  cfg.dataset.seed = derive_seed({base, 5});
  cfg.dataset.test_seed = derive_seed({base, 6});
}

std::filesystem::path data_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') return env;
  return cfg.source_dir / ".." / "data";
}

}  // namespace fedcvar::exp
