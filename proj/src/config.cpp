#include "spseg/config.hpp"

#include "spseg/io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("bad value for '" + key + "': '" + value + "'");
}

template <class T>
T number(const std::string& key, const std::string& value) {
  T out{};
  const char* b = value.data();
  const char* e = b + value.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) bad_value(key, value);
  return out;
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

std::vector<int> int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (value.empty() || value == "none") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number<int>(key, trim(item)));
  return out;
}

Vec3 vec3(const std::string& key, const std::string& value) {
  std::stringstream ss(value);
  std::string item;
  Vec3 v;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 3) bad_value(key, value);
    v[i++] = number<double>(key, trim(item));
  }
  if (i != 3) bad_value(key, value);
  return v;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class Target>
using Setter = std::function<void(Target&, const std::string& key, const std::string& value)>;

template <class Target>
Target apply(const KeyValues& kv, Target base, const std::map<std::string, Setter<Target>>& setters) {
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(base, key, value);
  }
  return base;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, 0, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, 0, "empty key");
    for (const auto& kvp : out)
      if (kvp.first == key) throw ParseError(source, line_no, 0, "duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path);
}

TrainConfig train_config_from(const KeyValues& kv, TrainConfig base) {
  using S = Setter<TrainConfig>;
  auto i = [](int TrainConfig::*m) -> S {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = number<int>(k, v); };
  };
  auto d = [](double TrainConfig::*m) -> S {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = number<double>(k, v); };
  };
  auto b = [](bool TrainConfig::*m) -> S {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = boolean(k, v); };
  };
  const std::map<std::string, S> setters = {
      {"m1", i(&TrainConfig::m1)},
      {"mt", i(&TrainConfig::mt)},
      {"round_epochs", i(&TrainConfig::round_epochs)},
      {"epochs", i(&TrainConfig::epochs)},
      {"primitives", i(&TrainConfig::primitives)},
      {"pfh_weight", d(&TrainConfig::pfh_weight)},
      {"tau", d(&TrainConfig::tau)},
      {"lr", d(&TrainConfig::lr)},
      {"momentum", d(&TrainConfig::momentum)},
      {"poly_power", d(&TrainConfig::poly_power)},
      {"batch_clouds", i(&TrainConfig::batch_clouds)},
      {"feature_dim", i(&TrainConfig::feature_dim)},
      {"hidden", [](TrainConfig& c, const std::string& k, const std::string& v) { c.hidden = int_list(k, v); }},
      {"voxel", d(&TrainConfig::voxel)},
      {"aggregation_radius", d(&TrainConfig::aggregation_radius)},
      {"normal_neighbors", i(&TrainConfig::normal_neighbors)},
      {"pfh_max_pairs", i(&TrainConfig::pfh_max_pairs)},
      {"growth_interval", i(&TrainConfig::growth_interval)},
      {"growth_step", i(&TrainConfig::growth_step)},
      {"refresh_every_epoch", b(&TrainConfig::refresh_every_epoch)},
      {"use_superpoints", b(&TrainConfig::use_superpoints)},
      {"point_sample_limit", i(&TrainConfig::point_sample_limit)},
      {"primitive_max_iter",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.primitive_kmeans.max_iter = number<int>(k, v); }},
      {"primitive_restarts",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.primitive_kmeans.restarts = number<int>(k, v); }},
      {"growth_max_iter",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.growth_kmeans.max_iter = number<int>(k, v); }},
      {"growth_restarts",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.growth_kmeans.restarts = number<int>(k, v); }},
  };
  TrainConfig out = apply(kv, std::move(base), setters);
  out.validate();
  return out;
}

SynthSpec synth_spec_from(const KeyValues& kv, SynthSpec base) {
  using S = Setter<SynthSpec>;
  auto i = [](int SynthSpec::*m) -> S {
    return [m](SynthSpec& s, const std::string& k, const std::string& v) { s.*m = number<int>(k, v); };
  };
  auto d = [](double SynthSpec::*m) -> S {
    return [m](SynthSpec& s, const std::string& k, const std::string& v) { s.*m = number<double>(k, v); };
  };
  auto v3 = [](Vec3 SynthSpec::*m) -> S {
    return [m](SynthSpec& s, const std::string& k, const std::string& v) { s.*m = vec3(k, v); };
  };
  const std::map<std::string, S> setters = {
      {"scenes", i(&SynthSpec::scenes)},
      {"test_scenes", i(&SynthSpec::test_scenes)},
      {"points", i(&SynthSpec::points)},
      {"room_min", v3(&SynthSpec::room_min)},
      {"room_max", v3(&SynthSpec::room_max)},
      {"color_noise", d(&SynthSpec::color_noise)},
      {"position_noise", d(&SynthSpec::position_noise)},
      {"clutter_fraction", d(&SynthSpec::clutter_fraction)},
  };
  SynthSpec out = apply(kv, std::move(base), setters);
  out.validate();
  return out;
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream o;
  std::string hidden;
  for (std::size_t k = 0; k < c.hidden.size(); ++k) hidden += (k ? "," : "") + std::to_string(c.hidden[k]);
  o << "m1 = " << c.m1 << "\nmt = " << c.mt << "\nround_epochs = " << c.round_epochs << "\nepochs = " << c.epochs
    << "\nprimitives = " << c.primitives << "\npfh_weight = " << fmt(c.pfh_weight) << "\ntau = " << fmt(c.tau)
    << "\nlr = " << fmt(c.lr) << "\nmomentum = " << fmt(c.momentum) << "\npoly_power = " << fmt(c.poly_power)
    << "\nbatch_clouds = " << c.batch_clouds << "\nfeature_dim = " << c.feature_dim
    << "\nhidden = " << (hidden.empty() ? "none" : hidden) << "\nvoxel = " << fmt(c.voxel)
    << "\naggregation_radius = " << fmt(c.aggregation_radius) << "\nnormal_neighbors = " << c.normal_neighbors
    << "\npfh_max_pairs = " << c.pfh_max_pairs << "\ngrowth_interval = " << c.growth_interval
    << "\ngrowth_step = " << c.growth_step << "\nrefresh_every_epoch = " << (c.refresh_every_epoch ? "true" : "false")
    << "\nuse_superpoints = " << (c.use_superpoints ? "true" : "false")
    << "\npoint_sample_limit = " << c.point_sample_limit << "\nprimitive_max_iter = " << c.primitive_kmeans.max_iter
    << "\nprimitive_restarts = " << c.primitive_kmeans.restarts << "\ngrowth_max_iter = " << c.growth_kmeans.max_iter
    << "\ngrowth_restarts = " << c.growth_kmeans.restarts << "\n";
  return o.str();
}

std::string to_text(const SynthSpec& s) {
  auto v3 = [](const Vec3& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); };
  std::ostringstream o;
  o << "scenes = " << s.scenes << "\ntest_scenes = " << s.test_scenes << "\npoints = " << s.points
    << "\nroom_min = " << v3(s.room_min) << "\nroom_max = " << v3(s.room_max)
    << "\ncolor_noise = " << fmt(s.color_noise) << "\nposition_noise = " << fmt(s.position_noise)
    << "\nclutter_fraction = " << fmt(s.clutter_fraction) << "\n";
  return o.str();
}

}  // namespace spseg
