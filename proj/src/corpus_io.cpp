#include "bugsem/corpus_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw MissingFile("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void byteswap_floats(std::span<float> values) {
  for (float& f : values) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = ((u & 0xFF) << 24) | ((u & 0xFF00) << 8) | ((u >> 8) & 0xFF00) | (u >> 24);
    std::memcpy(&f, &u, 4);
  }
}

fs::path tokens_path(const fs::path& dir, const std::string& id) {
  return dir / (id + ".tokens.json");
}
fs::path attention_path(const fs::path& dir, const std::string& id) {
  return dir / (id + ".attn.bin");
}
fs::path layer_path(const fs::path& dir, const std::string& id, std::size_t l) {
  return dir / (id + ".attn." + std::to_string(l) + ".bin");
}
fs::path attribution_path(const fs::path& dir, const std::string& id) {
  return dir / (id + ".attr.json");
}

AttentionTensor read_attention_file(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw MissingFile("cannot stat " + path.string());
  auto in = open_in(path, std::ios::binary);
  try {
    return read_attention(in, static_cast<std::size_t>(size));
  } catch (const CorruptTensor& e) {
    throw CorruptTensor(path.string() + ": " + e.what());
  }
}

std::string opt_int(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string();
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<int> parse_opt_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stoi(s);
}

void check_finite(std::span<const AlignmentRecord> records) {
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) {
      throw DataError("non-finite score for example " + r.example_id);
    }
  }
}

ordered_json record_json(const AlignmentRecord& r) {
  ordered_json j;
  j["example_id"] = r.example_id;
  j["metric"] = std::string(to_string(r.metric));
  j["tool"] = r.tool;
  j["layer"] = r.layer ? json(*r.layer) : json(nullptr);
  j["head"] = r.head ? json(*r.head) : json(nullptr);
  j["path_id"] = r.path_id ? json(*r.path_id) : json(nullptr);
  j["path_length"] = r.path_length ? json(*r.path_length) : json(nullptr);
  j["k"] = r.k;
  j["score"] = r.score;
  return j;
}

template <typename T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

ordered_json stats_json(const BoxStats& s) {
  ordered_json j;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["q1"] = s.q1;
  j["q3"] = s.q3;
  j["min"] = s.min;
  j["max"] = s.max;
  return j;
}

}  // namespace

std::vector<SourceFunction> read_corpus(std::istream& in) {
  std::vector<SourceFunction> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw SchemaError("record is not an object", lineno);

    SourceFunction fn;
    if (!j.contains("id")) throw SchemaError("missing 'id'", lineno);
    const auto& id = j.at("id");
    if (id.is_string()) {
      fn.id = id.get<std::string>();
    } else if (id.is_number_integer()) {
      fn.id = std::to_string(id.get<long long>());
    } else {
      throw SchemaError("'id' must be a string or integer", lineno);
    }
    if (fn.id.empty()) throw SchemaError("empty 'id'", lineno);

    if (!j.contains("code") || !j.at("code").is_string()) {
      throw SchemaError("missing string 'code'", lineno);
    }
    fn.code = j.at("code").get<std::string>();
    if (fn.code.empty()) throw SchemaError("empty 'code'", lineno);

    if (!j.contains("label")) throw LabelError("missing 'label'", lineno);
    const auto& label = j.at("label");
    int value = -1;
    if (label.is_boolean()) {
      value = label.get<bool>() ? 1 : 0;
    } else if (label.is_number_integer()) {
      value = static_cast<int>(label.get<long long>());
    }
    if (value != 0 && value != 1) throw LabelError("label must be 0 or 1", lineno);
    fn.label = value == 1 ? Label::vulnerable : Label::non_vulnerable;

    if (j.contains("dataset") && j.at("dataset").is_string()) {
      fn.dataset = j.at("dataset").get<std::string>();
    }
    if (j.contains("bug_lines") && !j.at("bug_lines").is_null()) {
      const auto& traces = j.at("bug_lines");
      if (!traces.is_array()) throw SchemaError("'bug_lines' must be an array", lineno);
      for (const auto& trace : traces) {
        if (!trace.is_array() || trace.empty()) {
          throw SchemaError("each trace must be a nonempty array", lineno);
        }
        std::vector<int> lines;
        for (const auto& l : trace) {
          if (!l.is_number_integer() || l.get<long long>() < 1) {
            throw SchemaError("trace line numbers must be integers >= 1", lineno);
          }
          lines.push_back(static_cast<int>(l.get<long long>()));
        }
        fn.bug_line_traces.push_back(std::move(lines));
      }
    }
    if (!ids.insert(fn.id).second) {
      throw SchemaError("duplicate id '" + fn.id + "'", lineno);
    }
    out.push_back(std::move(fn));
  }
  return out;
}

std::vector<SourceFunction> load_corpus(const fs::path& path) {
  auto in = open_in(path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const SourceFunction> corpus) {
  for (const auto& fn : corpus) {
    ordered_json j;
    j["id"] = fn.id;
    j["code"] = fn.code;
    j["label"] = static_cast<int>(fn.label);
    if (!fn.dataset.empty()) j["dataset"] = fn.dataset;
    if (!fn.bug_line_traces.empty()) j["bug_lines"] = fn.bug_line_traces;
    out << j.dump() << '\n';
  }
}

AttentionTensor read_attention(std::istream& in, std::size_t byte_size) {
  if (byte_size < 16) throw CorruptTensor("file shorter than the 16-byte header");
  unsigned char header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16)) {
    throw CorruptTensor("cannot read header");
  }
  if (std::memcmp(header, kAttentionMagic, 4) != 0) throw CorruptTensor("bad magic");
  AttentionTensor t;
  t.layers = read_u32(header + 4);
  t.heads = read_u32(header + 8);
  t.n = read_u32(header + 12);
  const std::size_t count = t.layers * t.heads * t.n * t.n;
  if (byte_size != 16 + 4 * count) {
    throw CorruptTensor("expected " + std::to_string(16 + 4 * count) +
                        " bytes for shape (" + std::to_string(t.layers) + "," +
                        std::to_string(t.heads) + "," + std::to_string(t.n) +
                        "), found " + std::to_string(byte_size));
  }
  t.data.resize(count);
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(4 * count))) {
    throw CorruptTensor("truncated tensor data");
  }
  if constexpr (std::endian::native == std::endian::big) byteswap_floats(t.data);
  return t;
}

void write_attention(std::ostream& out, const AttentionTensor& t) {
  out.write(kAttentionMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(t.layers));
  write_u32(out, static_cast<std::uint32_t>(t.heads));
  write_u32(out, static_cast<std::uint32_t>(t.n));
  if constexpr (std::endian::native == std::endian::big) {
    std::vector<float> copy = t.data;
    byteswap_floats(copy);
    out.write(reinterpret_cast<const char*>(copy.data()),
              static_cast<std::streamsize>(4 * copy.size()));
  } else {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(4 * t.data.size()));
  }
}

std::vector<InputToken> read_input_tokens(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = parse_json(ss.str(), "token file");
  if (!j.is_array() && !(j.is_object() && j.contains("tokens") && j.at("tokens").is_array())) {
    throw SchemaError("token file must be an array or hold a 'tokens' array");
  }
  const json& arr = j.is_array() ? j : j.at("tokens");
  std::vector<InputToken> out;
  for (const auto& t : arr) {
    if (!t.is_object()) {
      throw SchemaError("token " + std::to_string(out.size()) + " is not an object");
    }
    InputToken tok;
    tok.index = out.size();
    if (t.contains("text") && !t.at("text").is_string()) {
      throw SchemaError("token " + std::to_string(tok.index) + " has a non-string text");
    }
    tok.text = t.value("text", std::string());
    const bool has_start = t.contains("start") && !t.at("start").is_null();
    const bool has_end = t.contains("end") && !t.at("end").is_null();
    if (has_start != has_end) {
      throw SchemaError("token " + std::to_string(tok.index) +
                        " has only one of start/end");
    }
    if (has_start) {
      if (!t.at("start").is_number_integer() || !t.at("end").is_number_integer()) {
        throw SchemaError("token " + std::to_string(tok.index) + " has a non-integer span");
      }
      const auto b = t.at("start").get<long long>();
      const auto e = t.at("end").get<long long>();
      if (b < 0 || e < b) {
        throw SchemaError("token " + std::to_string(tok.index) + " has a bad span");
      }
      tok.char_span = Span{static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
    }
    out.push_back(std::move(tok));
  }
  return out;
}

bool dump_exists(const fs::path& dir, const std::string& id) {
  return fs::exists(tokens_path(dir, id));
}

ModelDump load_dump(const fs::path& dir, const std::string& id) {
  ModelDump dump;
  dump.example_id = id;
  {
    const auto p = tokens_path(dir, id);
    if (!fs::exists(p)) throw MissingFile("missing " + p.string());
    auto in = open_in(p);
    dump.tokens = read_input_tokens(in);
  }

  if (fs::exists(attention_path(dir, id))) {
    dump.attention = read_attention_file(attention_path(dir, id));
  } else if (fs::exists(layer_path(dir, id, 0))) {
    for (std::size_t l = 0; fs::exists(layer_path(dir, id, l)); ++l) {
      AttentionTensor layer = read_attention_file(layer_path(dir, id, l));
      if (layer.layers != 1) {
        throw CorruptTensor(layer_path(dir, id, l).string() +
                            ": split layer file must hold one layer");
      }
      if (l == 0) {
        dump.attention.heads = layer.heads;
        dump.attention.n = layer.n;
      } else if (layer.heads != dump.attention.heads || layer.n != dump.attention.n) {
        throw CorruptTensor("split layer files disagree on shape");
      }
      dump.attention.layers += 1;
      dump.attention.data.insert(dump.attention.data.end(), layer.data.begin(),
                                 layer.data.end());
    }
  }
  if (!dump.attention.empty() && dump.attention.n != dump.tokens.size()) {
    throw CorruptTensor("attention has n=" + std::to_string(dump.attention.n) +
                        " but the token file lists " +
                        std::to_string(dump.tokens.size()) + " tokens");
  }
  if (!dump.attention.empty()) {
    dump.nonstochastic_rows = count_nonstochastic_rows(dump.attention);
  }

  if (fs::exists(attribution_path(dir, id))) {
    auto in = open_in(attribution_path(dir, id));
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = parse_json(ss.str(), attribution_path(dir, id).string());
    if (!j.is_object()) throw SchemaError("attribution file must be an object");
    for (const auto& [tool, values] : j.items()) {
      if (!values.is_array() ||
          !std::all_of(values.begin(), values.end(),
                       [](const json& x) { return x.is_number(); })) {
        throw SchemaError("attribution '" + tool + "' must be an array of numbers");
      }
      auto v = values.get<std::vector<double>>();
      if (v.size() != dump.tokens.size()) {
        throw SchemaError("attribution '" + tool + "' has " +
                          std::to_string(v.size()) + " values for " +
                          std::to_string(dump.tokens.size()) + " tokens");
      }
      dump.attributions.emplace(tool, std::move(v));
    }
  }
  return dump;
}

void write_dump(const fs::path& dir, const ModelDump& dump, bool split_layers) {
  fs::create_directories(dir);
  {
    ordered_json j;
    j["example_id"] = dump.example_id;
    j["tokens"] = json::array();
    for (const auto& t : dump.tokens) {
      ordered_json tj;
      tj["text"] = t.text;
      tj["start"] = t.char_span ? json(t.char_span->begin) : json(nullptr);
      tj["end"] = t.char_span ? json(t.char_span->end) : json(nullptr);
      j["tokens"].push_back(tj);
    }
    auto out = open_out(tokens_path(dir, dump.example_id));
    out << j.dump() << '\n';
  }
  if (!dump.attention.empty()) {
    if (split_layers) {
      for (std::size_t l = 0; l < dump.attention.layers; ++l) {
        AttentionTensor layer(1, dump.attention.heads, dump.attention.n);
        const auto src = dump.attention.layer(l);
        std::copy(src.begin(), src.end(), layer.data.begin());
        auto out = open_out(layer_path(dir, dump.example_id, l), std::ios::binary);
        write_attention(out, layer);
      }
    } else {
      auto out = open_out(attention_path(dir, dump.example_id), std::ios::binary);
      write_attention(out, dump.attention);
    }
  }
  if (!dump.attributions.empty()) {
    ordered_json j;
    for (const auto& [tool, values] : dump.attributions) j[tool] = values;
    auto out = open_out(attribution_path(dir, dump.example_id));
    out << j.dump() << '\n';
  }
}

void write_features(std::ostream& out, std::span<const FeatureRecord> records) {
  for (const auto& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["kind"] = std::string(to_string(r.set.kind));
    j["version"] = std::string(to_string(r.version));
    j["path_id"] = r.set.path_id ? json(*r.set.path_id) : json(nullptr);
    j["tokens"] = r.set.tokens;
    j["texts"] = r.texts;
    out << j.dump() << '\n';
  }
}

std::vector<FeatureRecord> read_features(std::istream& in) {
  std::vector<FeatureRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      FeatureRecord r;
      r.id = j.at("id").get<std::string>();
      r.set.kind = parse_feature_kind(j.at("kind").get<std::string>());
      r.version = parse_pvs_version(j.value("version", std::string("v2")));
      r.set.path_id = opt_from<int>(j, "path_id");
      r.set.tokens = j.at("tokens").get<std::vector<std::size_t>>();
      if (j.contains("texts")) r.texts = j.at("texts").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw SchemaError(e.what(), lineno);
    } catch (const ArgumentError& e) {
      throw SchemaError(e.what(), lineno);
    }
  }
  return out;
}

std::vector<FeatureRecord> load_features(const fs::path& path) {
  auto in = open_in(path);
  return read_features(in);
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ArgumentError("unknown report format '" + std::string(s) + "'");
}

ReportFormat report_format_for(const fs::path& path) {
  return path.extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

fs::path summary_path_for(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_filename(csv_path.stem().string() + ".summary.csv");
  return p;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<SummaryRow> summarize(std::span<const AlignmentRecord> records,
                                  const ReportMeta& meta) {
  std::map<std::pair<Metric, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.metric, r.tool}].push_back(r.score);
  std::vector<SummaryRow> out;
  for (auto& [key, values] : groups) {
    out.push_back({meta.run, meta.dataset, key.first, key.second,
                   box_stats(std::move(values))});
  }
  return out;
}

void write_report(std::span<const AlignmentRecord> records, const fs::path& path,
                  ReportFormat format, const ReportMeta& meta) {
  if (records.empty()) throw DataError("no alignment records to report");
  check_finite(records);
  std::vector<AlignmentRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(), record_less);
  const auto summary = summarize(sorted, meta);

  if (format == ReportFormat::json) {
    ordered_json j;
    j["meta"] = {{"run", meta.run}, {"dataset", meta.dataset}};
    j["records"] = ordered_json::array();
    for (const auto& r : sorted) j["records"].push_back(record_json(r));
    j["summary"] = ordered_json::array();
    for (const auto& s : summary) {
      ordered_json sj;
      sj["run"] = s.run;
      sj["dataset"] = s.dataset;
      sj["metric"] = std::string(to_string(s.metric));
      sj["tool"] = s.tool;
      const ordered_json stats = stats_json(s.stats);
      for (const auto& [k, v] : stats.items()) sj[k] = v;
      j["summary"].push_back(sj);
    }
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path.string());
    return;
  }

  {
    auto out = open_out(path);
    out << "example_id,metric,tool,layer,head,path_id,path_length,k,score\n";
    for (const auto& r : sorted) {
      out << csv_field(r.example_id) << ',' << to_string(r.metric) << ','
          << csv_field(r.tool) << ',' << opt_int(r.layer) << ',' << opt_int(r.head)
          << ',' << opt_int(r.path_id) << ','
          << (r.path_length ? std::to_string(*r.path_length) : std::string()) << ','
          << r.k << ',' << format_double(r.score) << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
  }
  auto out = open_out(summary_path_for(path));
  out << "run,dataset,metric,tool,count,mean,median,q1,q3,min,max\n";
  for (const auto& s : summary) {
    out << csv_field(s.run) << ',' << csv_field(s.dataset) << ',' << to_string(s.metric)
        << ',' << csv_field(s.tool) << ',' << s.stats.count << ','
        << format_double(s.stats.mean) << ',' << format_double(s.stats.median) << ','
        << format_double(s.stats.q1) << ',' << format_double(s.stats.q3) << ','
        << format_double(s.stats.min) << ',' << format_double(s.stats.max) << '\n';
  }
  if (!out) throw DataError("write failed: " + summary_path_for(path).string());
}

std::vector<AlignmentRecord> read_report(const fs::path& path, ReportFormat format) {
  auto in = open_in(path);
  std::vector<AlignmentRecord> out;
  if (format == ReportFormat::json) {
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = parse_json(ss.str(), path.string());
    try {
      for (const auto& rj : j.at("records")) {
        AlignmentRecord r;
        r.example_id = rj.at("example_id").get<std::string>();
        r.metric = parse_metric(rj.at("metric").get<std::string>());
        r.tool = rj.value("tool", std::string());
        r.layer = opt_from<int>(rj, "layer");
        r.head = opt_from<int>(rj, "head");
        r.path_id = opt_from<int>(rj, "path_id");
        r.path_length = opt_from<std::size_t>(rj, "path_length");
        r.k = rj.at("k").get<std::size_t>();
        r.score = rj.at("score").get<double>();
        out.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ": " + e.what());
    } catch (const ArgumentError& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    return out;
  }

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw SchemaError("expected 9 columns", lineno);
    try {
      AlignmentRecord r;
      r.example_id = f[0];
      r.metric = parse_metric(f[1]);
      r.tool = f[2];
      r.layer = parse_opt_int(f[3]);
      r.head = parse_opt_int(f[4]);
      r.path_id = parse_opt_int(f[5]);
      if (!f[6].empty()) r.path_length = std::stoull(f[6]);
      r.k = std::stoull(f[7]);
      r.score = std::stod(f[8]);
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw SchemaError(std::string("bad field: ") + e.what(), lineno);
    } catch (const ArgumentError& e) {
      throw SchemaError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace bugsem
