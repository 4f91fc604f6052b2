#include "nomae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "nomae/error.hpp"

namespace nomae {

// ---------------------------------------------------------------- TOML subset

namespace {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  TomlDocument parse() {
    TomlDocument doc;
    std::string table;
    doc[table];
    while (pos_ < text_.size()) {
      skip_blank();
      if (pos_ >= text_.size()) break;
      const char c = text_[pos_];
      if (c == '\n') {
        advance();
        continue;
      }
      if (c == '[') {
        advance();
        skip_space();
        table = key();
        skip_space();
        expect(']');
        if (doc.count(table) && !doc[table].empty()) error("table [" + table + "] defined twice");
        doc[table];
      } else {
        const std::string k = key();
        skip_space();
        expect('=');
        skip_space();
        TomlValue v = value();
        if (!doc[table].emplace(k, std::move(v)).second) error("duplicate key '" + k + "'");
      }
      end_of_line();
    }
    return doc;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::ParseError, "config line " + std::to_string(line_) + ": " + msg);
  }

  void advance() {
    if (text_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
  }

  void skip_comment() {
    if (pos_ < text_.size() && text_[pos_] == '#')
      while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
  }

  void skip_blank() {
    skip_space();
    skip_comment();
  }

  // Whitespace, comments and newlines (inside arrays).
  void skip_all() {
    for (;;) {
      skip_blank();
      if (pos_ < text_.size() && text_[pos_] == '\n')
        advance();
      else
        return;
    }
  }

  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) error(std::string("expected '") + c + "'");
    advance();
  }

  void end_of_line() {
    skip_blank();
    if (pos_ < text_.size() && text_[pos_] != '\n') error("unexpected trailing characters");
  }

  std::string key() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' || text_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) error("expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  TomlValue value() {
    if (pos_ >= text_.size()) error("missing value");
    const char c = text_[pos_];
    if (c == '"') return {string()};
    if (c == '[') return {array()};
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return {true};
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return {false};
    }
    return number();
  }

  std::string string() {
    expect('"');
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\n') error("unterminated string");
      if (c == '\\') {
        if (pos_ >= text_.size()) error("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: error(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    expect('"');
    return out;
  }

  TomlValue::Array array() {
    expect('[');
    TomlValue::Array out;
    skip_all();
    while (pos_ < text_.size() && text_[pos_] != ']') {
      out.push_back(value());
      skip_all();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        advance();
        skip_all();
      } else {
        break;
      }
    }
    expect(']');
    return out;
  }

  TomlValue number() {
    std::size_t end = pos_;
    while (end < text_.size() && !std::isspace(static_cast<unsigned char>(text_[end])) && text_[end] != ',' &&
           text_[end] != ']' && text_[end] != '#')
      ++end;
    std::string tok(text_.substr(pos_, end - pos_));
    if (tok.empty()) error("expected a value");
    if (tok[0] == '+') tok.erase(0, 1);
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "-inf" ||
                          tok == "nan";
    TomlValue out;
    std::from_chars_result res{};
    if (is_float) {
      double d = 0;
      res = std::from_chars(tok.data(), tok.data() + tok.size(), d);
      out.v = d;
    } else {
      int64_t i = 0;
      res = std::from_chars(tok.data(), tok.data() + tok.size(), i);
      out.v = i;
    }
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) error("invalid value '" + tok + "'");
    pos_ = end;
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

// Typed access to one table; every key must be consumed.
class Section {
 public:
  Section(const TomlDocument& doc, std::string name) : name_(std::move(name)) {
    if (auto it = doc.find(name_); it != doc.end()) table_ = &it->second;
  }

  ~Section() noexcept(false) {
    if (!table_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : *table_)
      if (!used_.count(k)) fail(ErrorKind::InvalidConfig, "unknown key '" + qualified(k) + "'");
  }

  void get(const std::string& k, double& out) { with(k, [&](const TomlValue& v) { out = as_double(k, v); }); }
  void get(const std::string& k, bool& out) {
    with(k, [&](const TomlValue& v) {
      if (auto* b = std::get_if<bool>(&v.v))
        out = *b;
      else
        type_error(k, "a boolean");
    });
  }
  void get(const std::string& k, std::string& out) {
    with(k, [&](const TomlValue& v) {
      if (auto* s = std::get_if<std::string>(&v.v))
        out = *s;
      else
        type_error(k, "a string");
    });
  }
  template <class Int>
    requires std::is_integral_v<Int>
  void get(const std::string& k, Int& out) {
    with(k, [&](const TomlValue& v) {
      const int64_t i = as_int(k, v);
      if constexpr (std::is_unsigned_v<Int>)
        if (i < 0) fail(ErrorKind::InvalidConfig, "'" + qualified(k) + "' must be non-negative");
      out = static_cast<Int>(i);
    });
  }
  void get(const std::string& k, std::vector<double>& out) {
    with(k, [&](const TomlValue& v) {
      out.clear();
      for (const TomlValue& e : array(k, v)) out.push_back(as_double(k, e));
    });
  }
  void get(const std::string& k, std::vector<int>& out) {
    with(k, [&](const TomlValue& v) {
      out.clear();
      for (const TomlValue& e : array(k, v)) out.push_back(static_cast<int>(as_int(k, e)));
    });
  }
  void get(const std::string& k, std::vector<std::string>& out) {
    with(k, [&](const TomlValue& v) {
      out.clear();
      for (const TomlValue& e : array(k, v)) {
        if (auto* s = std::get_if<std::string>(&e.v))
          out.push_back(*s);
        else
          type_error(k, "an array of strings");
      }
    });
  }
  template <std::size_t N>
  void get(const std::string& k, std::array<double, N>& out) {
    std::vector<double> tmp;
    if (!has(k)) return;
    get(k, tmp);
    if (tmp.size() != N)
      fail(ErrorKind::InvalidConfig, "'" + qualified(k) + "' needs " + std::to_string(N) + " values");
    std::copy(tmp.begin(), tmp.end(), out.begin());
  }
  void get(const std::string& k, IntRange& out) {
    std::vector<int> tmp;
    if (!has(k)) return;
    get(k, tmp);
    if (tmp.size() != 2) fail(ErrorKind::InvalidConfig, "'" + qualified(k) + "' needs [lo, hi]");
    out = {tmp[0], tmp[1]};
  }

 private:
  bool has(const std::string& k) const { return table_ && table_->count(k); }

  template <class F>
  void with(const std::string& k, F&& f) {
    if (!table_) return;
    auto it = table_->find(k);
    if (it == table_->end()) return;
    used_.insert(k);
    f(it->second);
  }

  std::string qualified(const std::string& k) const { return name_.empty() ? k : name_ + "." + k; }

  [[noreturn]] void type_error(const std::string& k, const char* what) const {
    fail(ErrorKind::InvalidConfig, "'" + qualified(k) + "' must be " + what);
  }

  double as_double(const std::string& k, const TomlValue& v) const {
    if (auto* d = std::get_if<double>(&v.v)) return *d;
    if (auto* i = std::get_if<int64_t>(&v.v)) return static_cast<double>(*i);
    type_error(k, "a number");
  }

  int64_t as_int(const std::string& k, const TomlValue& v) const {
    if (auto* i = std::get_if<int64_t>(&v.v)) return *i;
    type_error(k, "an integer");
  }

  const TomlValue::Array& array(const std::string& k, const TomlValue& v) const {
    if (auto* a = std::get_if<TomlValue::Array>(&v.v)) return *a;
    type_error(k, "an array");
  }

  std::string name_;
  const TomlTable* table_ = nullptr;
  std::set<std::string> used_;
};

nn::Activation parse_activation(const std::string& name) {
  if (name == "gelu") return nn::Activation::Gelu;
  if (name == "relu") return nn::Activation::Relu;
  fail(ErrorKind::InvalidConfig, "unknown activation '" + name + "'");
}

const char* activation_name(nn::Activation a) { return a == nn::Activation::Gelu ? "gelu" : "relu"; }

const char* format_name(PointFormat f) { return f == PointFormat::BinXyzi ? "bin_xyzi" : "ascii_xyz"; }

}  // namespace

TomlDocument parse_toml(std::string_view text) { return TomlParser(text).parse(); }

// ---------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  require(precision == "f32" || precision == "f64", ErrorKind::InvalidConfig, "run.precision must be f32 or f64");
  require(checkpoint_every >= 0, ErrorKind::InvalidConfig, "run.checkpoint_every must be >= 0");
  require(total_ratio >= 0.0 && total_ratio < 1.0, ErrorKind::InvalidConfig, "masking.total_ratio must lie in [0, 1)");
  require(stats_seeds >= 1, ErrorKind::InvalidConfig, "masking.stats_seeds must be >= 1");
  for (int n : sweep)
    require(n >= 3 && n % 2 == 1, ErrorKind::InvalidConfig, "masking.sweep sizes must be odd and >= 3");
  require(clip_range[0] < clip_range[3] && clip_range[1] < clip_range[4] && clip_range[2] < clip_range[5],
          ErrorKind::InvalidConfig, "geometry.clip_range must be [xmin, ymin, zmin, xmax, ymax, zmax]");
  require(data.source == "synth" || data.source == "files", ErrorKind::InvalidConfig,
          "data.source must be \"synth\" or \"files\"");
  if (data.source == "files")
    require(!data.paths.empty(), ErrorKind::InvalidConfig, "data.paths is empty but data.source = \"files\"");
  else
    require(data.num_scenes >= 1 && data.eval_scenes >= 0, ErrorKind::InvalidConfig,
            "data.num_scenes must be >= 1 and data.eval_scenes >= 0");
  pipeline().validate();
  model_config().validate(neighborhood);
  train.validate();
  synth.validate();
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.base_size = base_size;
  p.origin = origin;
  p.num_scales = num_scales;
  p.masking = masking_for_total(strategy, total_ratio, num_scales, seed);
  p.neighborhood = neighborhood;
  return p;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.num_scales = num_scales;
  m.init_seed = derive_seed(seed, 0x1, 0);
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, 0x2, 0);
  return t;
}

RunConfig run_config_from_toml(const TomlDocument& doc) {
  for (const auto& [name, table] : doc) {
    static const std::set<std::string> known = {"",          "run",   "geometry", "masking", "neighborhood", "model",
                                                "optimizer", "train", "data",     "synth",   "augment"};
    if (!known.count(name)) fail(ErrorKind::InvalidConfig, "unknown table [" + name + "]");
    if (name.empty() && !table.empty())
      fail(ErrorKind::InvalidConfig, "key '" + table.begin()->first + "' must live inside a table");
  }
  RunConfig c;
  {
    Section s(doc, "run");
    s.get("seed", c.seed);
    s.get("out_dir", c.out_dir);
    s.get("precision", c.precision);
    s.get("checkpoint_every", c.checkpoint_every);
  }
  {
    Section s(doc, "geometry");
    s.get("base_size", c.base_size);
    s.get("origin", c.origin);
    s.get("num_scales", c.num_scales);
    s.get("clip", c.clip);
    s.get("clip_range", c.clip_range);
  }
  {
    Section s(doc, "masking");
    std::string strategy(to_string(c.strategy));
    s.get("strategy", strategy);
    c.strategy = parse_mask_strategy(strategy);
    s.get("total_ratio", c.total_ratio);
    s.get("stats_seeds", c.stats_seeds);
    s.get("sweep", c.sweep);
  }
  c.neighborhood = NeighborhoodSpec::uniform(c.num_scales, 9);
  {
    Section s(doc, "neighborhood");
    s.get("sizes", c.neighborhood.side);
  }
  c.model.num_scales = c.num_scales;
  if (static_cast<int>(c.model.channels.size()) != c.num_scales) {
    c.model.channels.clear();
    for (int s = 0; s < c.num_scales; ++s) c.model.channels.push_back(32 << std::min(s, 5));
  }
  {
    Section s(doc, "model");
    std::string act = activation_name(c.model.activation);
    s.get("channels", c.model.channels);
    s.get("encoder_blocks", c.model.encoder_blocks);
    s.get("decoder_layers", c.model.decoder.layers);
    s.get("decoder_reach", c.model.decoder.reach);
    s.get("head_depth", c.model.decoder.head_depth);
    s.get("activation", act);
    s.get("prior_bias_init", c.model.prior_bias_init);
    c.model.activation = parse_activation(act);
  }
  {
    Section s(doc, "optimizer");
    s.get("lr", c.train.optim.lr);
    s.get("beta1", c.train.optim.beta1);
    s.get("beta2", c.train.optim.beta2);
    s.get("eps", c.train.optim.eps);
    s.get("weight_decay", c.train.optim.weight_decay);
    s.get("min_lr", c.train.min_lr);
  }
  {
    Section s(doc, "train");
    s.get("batch_size", c.train.batch_size);
    s.get("epochs", c.train.epochs);
    s.get("steps", c.train.steps);
    s.get("warmup_steps", c.train.warmup_steps);
    s.get("augment", c.train.augment);
    s.get("resample_masks", c.train.resample_masks);
  }
  {
    Section s(doc, "data");
    std::string format = format_name(c.data.format);
    s.get("source", c.data.source);
    s.get("paths", c.data.paths);
    s.get("format", format);
    s.get("num_scenes", c.data.num_scenes);
    s.get("eval_scenes", c.data.eval_scenes);
    c.data.format = parse_point_format(format);
  }
  {
    Section s(doc, "synth");
    s.get("seed", c.synth.seed);
    s.get("ground_extent", c.synth.ground_extent);
    s.get("boxes", c.synth.boxes);
    s.get("walls", c.synth.walls);
    s.get("poles", c.synth.poles);
    s.get("spheres", c.synth.spheres);
    s.get("sensor_height", c.synth.sensor_height);
    s.get("azimuth_rays", c.synth.azimuth_rays);
    s.get("elevation_rays", c.synth.elevation_rays);
    s.get("elevation_min_deg", c.synth.elevation_min_deg);
    s.get("elevation_max_deg", c.synth.elevation_max_deg);
    s.get("max_range", c.synth.max_range);
    s.get("min_object_distance", c.synth.min_object_distance);
    s.get("dropout", c.synth.dropout);
  }
  {
    Section s(doc, "augment");
    AugmentConfig& a = c.train.augmentation;
    s.get("rotate", a.rotate);
    s.get("rotate_prob", a.rotate_prob);
    s.get("rotate_range", a.rotate_range);
    s.get("scale", a.scale);
    s.get("scale_range", a.scale_range);
    s.get("flip", a.flip);
    s.get("flip_prob", a.flip_prob);
    s.get("jitter", a.jitter);
    s.get("jitter_sigma", a.jitter_sigma);
    s.get("jitter_clip", a.jitter_clip);
  }
  c.validate();
  return c;
}

RunConfig parse_run_config(std::string_view text) { return run_config_from_toml(parse_toml(text)); }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

namespace {

std::string fmt(double d) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

template <class Range>
std::string list(const Range& r, auto&& f) {
  std::string out = "[";
  bool first = true;
  for (const auto& x : r) {
    if (!first) out += ", ";
    out += f(x);
    first = false;
  }
  return out + "]";
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

void write_run_config(std::ostream& os, const RunConfig& c) {
  auto num = [](double d) { return fmt(d); };
  auto integer = [](auto i) { return std::to_string(i); };
  const TrainConfig& t = c.train;
  const AugmentConfig& a = t.augmentation;
  const SceneConfig& sc = c.synth;
  os << "[run]\n"
     << "seed = " << c.seed << "\n"
     << "out_dir = " << quote(c.out_dir) << "\n"
     << "precision = " << quote(c.precision) << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n\n"
     << "[geometry]\n"
     << "base_size = " << fmt(c.base_size) << "\n"
     << "origin = " << list(c.origin, num) << "\n"
     << "num_scales = " << c.num_scales << "\n"
     << "clip = " << bool_str(c.clip) << "\n"
     << "clip_range = " << list(c.clip_range, num) << "\n\n"
     << "[masking]\n"
     << "strategy = " << quote(std::string(to_string(c.strategy))) << "\n"
     << "total_ratio = " << fmt(c.total_ratio) << "\n"
     << "stats_seeds = " << c.stats_seeds << "\n"
     << "sweep = " << list(c.sweep, integer) << "\n\n"
     << "[neighborhood]\n"
     << "sizes = " << list(c.neighborhood.side, integer) << "\n\n"
     << "[model]\n"
     << "channels = " << list(c.model.channels, integer) << "\n"
     << "encoder_blocks = " << c.model.encoder_blocks << "\n"
     << "decoder_layers = " << c.model.decoder.layers << "\n"
     << "decoder_reach = " << c.model.decoder.reach << "\n"
     << "head_depth = " << c.model.decoder.head_depth << "\n"
     << "activation = " << quote(activation_name(c.model.activation)) << "\n"
     << "prior_bias_init = " << bool_str(c.model.prior_bias_init) << "\n\n"
     << "[optimizer]\n"
     << "lr = " << fmt(t.optim.lr) << "\n"
     << "beta1 = " << fmt(t.optim.beta1) << "\n"
     << "beta2 = " << fmt(t.optim.beta2) << "\n"
     << "eps = " << fmt(t.optim.eps) << "\n"
     << "weight_decay = " << fmt(t.optim.weight_decay) << "\n"
     << "min_lr = " << fmt(t.min_lr) << "\n\n"
     << "[train]\n"
     << "batch_size = " << t.batch_size << "\n"
     << "epochs = " << t.epochs << "\n"
     << "steps = " << t.steps << "\n"
     << "warmup_steps = " << t.warmup_steps << "\n"
     << "augment = " << bool_str(t.augment) << "\n"
     << "resample_masks = " << bool_str(t.resample_masks) << "\n\n"
     << "[data]\n"
     << "source = " << quote(c.data.source) << "\n"
     << "paths = " << list(c.data.paths, quote) << "\n"
     << "format = " << quote(format_name(c.data.format)) << "\n"
     << "num_scenes = " << c.data.num_scenes << "\n"
     << "eval_scenes = " << c.data.eval_scenes << "\n\n"
     << "[synth]\n"
     << "seed = " << sc.seed << "\n"
     << "ground_extent = " << fmt(sc.ground_extent) << "\n"
     << "boxes = [" << sc.boxes.lo << ", " << sc.boxes.hi << "]\n"
     << "walls = [" << sc.walls.lo << ", " << sc.walls.hi << "]\n"
     << "poles = [" << sc.poles.lo << ", " << sc.poles.hi << "]\n"
     << "spheres = [" << sc.spheres.lo << ", " << sc.spheres.hi << "]\n"
     << "sensor_height = " << fmt(sc.sensor_height) << "\n"
     << "azimuth_rays = " << sc.azimuth_rays << "\n"
     << "elevation_rays = " << sc.elevation_rays << "\n"
     << "elevation_min_deg = " << fmt(sc.elevation_min_deg) << "\n"
     << "elevation_max_deg = " << fmt(sc.elevation_max_deg) << "\n"
     << "max_range = " << fmt(sc.max_range) << "\n"
     << "min_object_distance = " << fmt(sc.min_object_distance) << "\n"
     << "dropout = " << fmt(sc.dropout) << "\n\n"
     << "[augment]\n"
     << "rotate = " << bool_str(a.rotate) << "\n"
     << "rotate_prob = " << fmt(a.rotate_prob) << "\n"
     << "rotate_range = " << list(a.rotate_range, num) << "\n"
     << "scale = " << bool_str(a.scale) << "\n"
     << "scale_range = " << list(a.scale_range, num) << "\n"
     << "flip = " << bool_str(a.flip) << "\n"
     << "flip_prob = " << fmt(a.flip_prob) << "\n"
     << "jitter = " << bool_str(a.jitter) << "\n"
     << "jitter_sigma = " << fmt(a.jitter_sigma) << "\n"
     << "jitter_clip = " << fmt(a.jitter_clip) << "\n";
}

}  // namespace nomae
