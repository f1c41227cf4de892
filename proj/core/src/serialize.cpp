#include "dsr/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dsr {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;

void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) fail("serialize: write failed");
}

void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is || is.gcount() != static_cast<std::streamsize>(n))
    fail("serialize: truncated file");
}

void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, 8); }
void put_i32(std::ostream& os, std::int32_t v) { put_bytes(os, &v, 4); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, 8); }

std::uint32_t get_u32(std::istream& is) { std::uint32_t v; get_bytes(is, &v, 4); return v; }
std::uint64_t get_u64(std::istream& is) { std::uint64_t v; get_bytes(is, &v, 8); return v; }
std::int32_t get_i32(std::istream& is) { std::int32_t v; get_bytes(is, &v, 4); return v; }
double get_f64(std::istream& is) { double v; get_bytes(is, &v, 8); return v; }

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

std::string get_string(std::istream& is) {
  std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) fail("serialize: implausible string length");
  std::string s(n, '\0');
  if (n > 0) get_bytes(is, s.data(), n);
  return s;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  if (!t.defined()) fail("serialize: undefined tensor");
  put_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_i32(os, t.dim(i));
  const std::vector<double>& d = t.data();
  put_bytes(os, d.data(), d.size() * 8);
}

Tensor get_tensor(std::istream& is) {
  std::uint32_t nd = get_u32(is);
  if (nd > 8) fail("serialize: implausible tensor rank");
  Shape shape(nd);
  for (std::uint32_t i = 0; i < nd; ++i) {
    shape[i] = get_i32(is);
    if (shape[i] < 1) fail("serialize: bad tensor dim");
  }
  std::int64_t n = shape_numel(shape);
  if (n > (1LL << 28)) fail("serialize: implausible tensor size");
  std::vector<double> data(static_cast<size_t>(n));
  get_bytes(is, data.data(), data.size() * 8);
  return Tensor::from_data(shape, std::move(data));
}

void put_int_vec(std::ostream& os, const std::vector<int>& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put_i32(os, x);
}

std::vector<int> get_int_vec(std::istream& is) {
  std::uint32_t n = get_u32(is);
  if (n > (1u << 24)) fail("serialize: implausible vector length");
  std::vector<int> v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = get_i32(is);
  return v;
}

void put_string_vec(std::ostream& os, const std::vector<std::string>& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (const std::string& s : v) put_string(os, s);
}

std::vector<std::string> get_string_vec(std::istream& is) {
  std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) fail("serialize: implausible list length");
  std::vector<std::string> v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = get_string(is);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open '" + path + "' for reading");
  return is;
}

void check_magic(std::istream& is, const char expect[4], const std::string& what) {
  char m[4];
  get_bytes(is, m, 4);
  if (std::memcmp(m, expect, 4) != 0) fail(what + ": bad magic");
}

}  // namespace

std::uint64_t task_config_hash(const SyntheticTaskConfig& cfg) {
  std::ostringstream os;
  os << cfg.t << '|' << cfg.h << '|' << cfg.w << '|' << cfg.d << '|' << cfg.n_archetypes << '|'
     << cfg.events_per_video << '|' << cfg.event_duration << '|' << cfg.event_extent << '|'
     << cfg.event_amplitude << '|' << cfg.noise_std << '|' << cfg.n_train << '|' << cfg.n_test
     << '|' << cfg.seed;
  return fnv1a64(os.str());
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     std::uint64_t config_hash) {
  std::ofstream os = open_out(path);
  put_bytes(os, "DSRT", 4);
  put_u32(os, kCheckpointVersion);
  put_u64(os, config_hash);
  put_u32(os, static_cast<std::uint32_t>(store.all().size()));
  for (const Parameter& p : store.all()) {
    put_string(os, p.name);
    put_tensor(os, p.value);
  }
}

void load_checkpoint(const std::string& path, ParamStore& store, std::uint64_t config_hash) {
  std::ifstream is = open_in(path);
  check_magic(is, "DSRT", "checkpoint");
  std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    fail("checkpoint: version " + std::to_string(version) + ", expected " +
         std::to_string(kCheckpointVersion));
  std::uint64_t hash = get_u64(is);
  if (hash != config_hash)
    fail("checkpoint: config hash mismatch (file was written by a different configuration)");
  std::uint32_t n = get_u32(is);
  if (n != store.all().size())
    fail("checkpoint: " + std::to_string(n) + " parameters in file, model has " +
         std::to_string(store.all().size()));
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = get_string(is);
    Tensor t = get_tensor(is);
    if (!store.contains(name)) fail("checkpoint: unknown parameter '" + name + "'");
    const Parameter& p = store.find(name);
    if (p.value.shape() != t.shape())
      fail("checkpoint: parameter '" + name + "' has shape " + shape_str(t.shape()) +
           ", model expects " + shape_str(p.value.shape()));
    Tensor dst = p.value;
    std::copy(t.data().begin(), t.data().end(), dst.mutable_data().begin());
  }
}

void save_dataset(const std::string& path, const TaskDataset& ds) {
  std::ofstream os = open_out(path);
  put_bytes(os, "DSRD", 4);
  put_u32(os, kDatasetVersion);
  put_u64(os, task_config_hash(ds.cfg));
  const SyntheticTaskConfig& c = ds.cfg;
  put_i32(os, c.t); put_i32(os, c.h); put_i32(os, c.w); put_i32(os, c.d);
  put_i32(os, c.n_archetypes);
  put_i32(os, c.events_per_video);
  put_i32(os, c.event_duration);
  put_i32(os, c.event_extent);
  put_f64(os, c.event_amplitude);
  put_f64(os, c.noise_std);
  put_i32(os, c.n_train);
  put_i32(os, c.n_test);
  put_u64(os, c.seed);
  put_string_vec(os, ds.archetype_names);
  put_string_vec(os, ds.subword_vocab);
  put_tensor(os, ds.signatures);
  put_tensor(os, ds.embeddings);
  auto put_examples = [&](const std::vector<TaskExample>& xs) {
    put_u32(os, static_cast<std::uint32_t>(xs.size()));
    for (const TaskExample& ex : xs) {
      put_tensor(os, ex.video.x);
      put_i32(os, ex.label);
      put_i32(os, static_cast<int>(ex.tmpl));
      put_i32(os, ex.queried_archetype);
      put_u32(os, static_cast<std::uint32_t>(ex.events.size()));
      for (const PlantedEvent& ev : ex.events) {
        put_i32(os, ev.archetype);
        put_i32(os, ev.t0);
        put_i32(os, ev.duration);
        put_i32(os, ev.y0);
        put_i32(os, ev.x0);
        put_i32(os, ev.extent);
      }
      put_int_vec(os, ex.question.token_ids);
      put_string_vec(os, ex.question.parse.words);
      put_int_vec(os, ex.question.parse.governor);
      put_int_vec(os, ex.question.parse.subword_counts);
      put_tensor(os, ex.question.embeddings);
      put_tensor(os, ex.question.adjacency);
    }
  };
  put_examples(ds.train);
  put_examples(ds.test);
}

TaskDataset load_dataset(const std::string& path) {
  std::ifstream is = open_in(path);
  check_magic(is, "DSRD", "dataset");
  std::uint32_t version = get_u32(is);
  if (version != kDatasetVersion)
    fail("dataset: version " + std::to_string(version) + ", expected " +
         std::to_string(kDatasetVersion));
  std::uint64_t hash = get_u64(is);
  TaskDataset ds;
  SyntheticTaskConfig& c = ds.cfg;
  c.t = get_i32(is); c.h = get_i32(is); c.w = get_i32(is); c.d = get_i32(is);
  c.n_archetypes = get_i32(is);
  c.events_per_video = get_i32(is);
  c.event_duration = get_i32(is);
  c.event_extent = get_i32(is);
  c.event_amplitude = get_f64(is);
  c.noise_std = get_f64(is);
  c.n_train = get_i32(is);
  c.n_test = get_i32(is);
  c.seed = get_u64(is);
  if (task_config_hash(c) != hash) fail("dataset: config hash mismatch");
  c.validate();
  ds.archetype_names = get_string_vec(is);
  ds.subword_vocab = get_string_vec(is);
  ds.signatures = get_tensor(is);
  ds.embeddings = get_tensor(is);
  auto get_examples = [&](std::vector<TaskExample>& xs, int expect) {
    std::uint32_t n = get_u32(is);
    if (static_cast<int>(n) != expect)
      fail("dataset: split size " + std::to_string(n) + " disagrees with config " +
           std::to_string(expect));
    xs.resize(n);
    for (TaskExample& ex : xs) {
      ex.video = FeatureVolume(get_tensor(is));
      ex.label = get_i32(is);
      int tm = get_i32(is);
      if (tm < 0 || tm > 3) fail("dataset: bad template tag");
      ex.tmpl = static_cast<QuestionTemplate>(tm);
      ex.queried_archetype = get_i32(is);
      std::uint32_t ne = get_u32(is);
      if (ne > 1024) fail("dataset: implausible event count");
      ex.events.resize(ne);
      for (PlantedEvent& ev : ex.events) {
        ev.archetype = get_i32(is);
        ev.t0 = get_i32(is);
        ev.duration = get_i32(is);
        ev.y0 = get_i32(is);
        ev.x0 = get_i32(is);
        ev.extent = get_i32(is);
      }
      ex.question.token_ids = get_int_vec(is);
      ex.question.parse.words = get_string_vec(is);
      ex.question.parse.governor = get_int_vec(is);
      ex.question.parse.subword_counts = get_int_vec(is);
      ex.question.embeddings = get_tensor(is);
      ex.question.adjacency = get_tensor(is);
      ex.question.validate();
    }
  };
  get_examples(ds.train, c.n_train);
  get_examples(ds.test, c.n_test);
  return ds;
}

void write_metrics_jsonl(const std::string& path, const std::vector<StepMetrics>& steps) {
  std::ofstream os = open_out(path);
  for (const StepMetrics& s : steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["loss"] = s.loss;
    j["reg"] = s.reg;
    j["accuracy"] = s.accuracy;
    os << j.dump() << '\n';
  }
  if (!os) fail("write_metrics_jsonl: write failed");
}

void write_sample_dump(const std::string& path, const SampledTokenSet& tokens) {
  std::ofstream os = open_out(path);
  int n_q = tokens.ref_points.dim(0);
  for (int q = 0; q < n_q; ++q) {
    nlohmann::ordered_json j;
    j["kind"] = "ref";
    j["query"] = q;
    j["t"] = tokens.ref_points.at({q, 0});
    j["y"] = tokens.ref_points.at({q, 1});
    j["x"] = tokens.ref_points.at({q, 2});
    os << j.dump() << '\n';
  }
  for (size_t l = 0; l < tokens.locations.size(); ++l)
    for (size_t m = 0; m < tokens.locations[l].size(); ++m) {
      const Tensor& loc = tokens.locations[l][m];
      const Tensor& wts = tokens.weights[l][m];
      int k = wts.dim(1);
      for (int q = 0; q < n_q; ++q)
        for (int p = 0; p < k; ++p) {
          nlohmann::ordered_json j;
          j["kind"] = "sample";
          j["layer"] = l;
          j["head"] = m;
          j["query"] = q;
          j["point"] = p;
          j["t"] = loc.at({q * k + p, 0});
          j["y"] = loc.at({q * k + p, 1});
          j["x"] = loc.at({q * k + p, 2});
          j["weight"] = wts.at({q, p});
          os << j.dump() << '\n';
        }
    }
  if (!os) fail("write_sample_dump: write failed");
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) fail("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  return parse_kv_text(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("cannot open '" + path + "' for writing");
  os << text;
  if (!os) fail("write failed for '" + path + "'");
}

}  // namespace dsr
