#pragma once

#include <qent/datagen.hpp>
#include <qent/error.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace qent {

// Dataset text format, version 1:
//
//   # qent-dataset 1
//   # label_kind=coherent_information
//   # d=3
//   # measurement=cglmp
//   # layout=flat
//   # feature_length=36
//   # samples=43000
//   # columns=family,seed,stream,nparams,params...,label,features...
//   nmr_mixed,7,1234,2,2.0000000000000001e-01,0.0000000000000000e+00,<label>,<f0>,...
//
// Reals are written with 17 significant digits, which round-trips binary64 exactly.

inline constexpr int kDatasetVersion = 1;

namespace io {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(where + ": cannot parse real '" + std::string(s) + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view s, const std::string& where) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(where + ": cannot parse integer '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace io

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  const auto& s = ds.schema;
  os << "# qent-dataset " << kDatasetVersion << '\n'
     << "# label_kind=" << to_string(s.label) << '\n'
     << "# d=" << s.d << '\n'
     << "# measurement=" << s.measurement << '\n'
     << "# layout=" << to_string(s.layout) << '\n'
     << "# feature_length=" << s.feature_length << '\n'
     << "# samples=" << ds.samples.size() << '\n'
     << "# columns=family,seed,stream,nparams,params...,label,features...\n";
  std::string line;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& x = ds.samples[i];
    if (x.features.size() != s.feature_length)
      throw DataError("sample " + std::to_string(i) + " does not match the dataset schema");
    line.clear();
    line += to_string(x.meta.family);
    line += ',' + std::to_string(x.meta.seed) + ',' + std::to_string(x.meta.stream) + ',' +
            std::to_string(x.meta.params.size());
    for (double p : x.meta.params) line += ',' + io::format_double(p);
    line += ',' + io::format_double(x.label);
    for (double f : x.features) line += ',' + io::format_double(f);
    os << line << '\n';
  }
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  write_dataset(os, ds);
  if (!os) throw DataError("write failed for '" + path.string() + "'");
}

inline Dataset read_dataset(std::istream& is, const std::string& name = "<stream>") {
  std::map<std::string, std::string, std::less<>> header;
  std::string line;
  std::size_t line_no = 0;
  bool magic = false;
  while (is.peek() == '#' && std::getline(is, line)) {
    ++line_no;
    std::string_view v(line);
    v.remove_prefix(1);
    while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
    if (v.starts_with("qent-dataset ")) {
      const auto version = io::parse_int<int>(v.substr(13), name + ": header field 'version'");
      if (version != kDatasetVersion)
        throw DataError(name + ": unsupported dataset version " + std::to_string(version));
      magic = true;
      continue;
    }
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw DataError(name + ": malformed header line " + std::to_string(line_no));
    header.emplace(std::string(v.substr(0, eq)), std::string(v.substr(eq + 1)));
  }
  if (!magic) throw DataError(name + ": missing '# qent-dataset' header");
  auto field = [&](const char* key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw DataError(name + ": missing header field '" + key + "'");
    return it->second;
  };

  Dataset ds;
  ds.schema.label = label_kind_from_string(field("label_kind"));
  ds.schema.d = io::parse_int<std::size_t>(field("d"), name + ": header field 'd'");
  ds.schema.measurement = field("measurement");
  if (ds.schema.measurement != "cglmp" && ds.schema.measurement != "pauli_xy")
    throw DataError(name + ": header field 'measurement' has unknown value '" + ds.schema.measurement + "'");
  try {
    ds.schema.layout = layout_from_string(field("layout"));
  } catch (const ConfigError& e) {
    throw DataError(name + ": header field 'layout': " + e.what());
  }
  ds.schema.feature_length = io::parse_int<std::size_t>(field("feature_length"), name + ": header field 'feature_length'");
  const auto expected = io::parse_int<std::size_t>(field("samples"), name + ": header field 'samples'");
  const std::size_t want_len =
      ds.schema.measurement == "pauli_xy" ? 64 : 4 * ds.schema.d * ds.schema.d;
  if (ds.schema.feature_length != want_len)
    throw DataError(name + ": header field 'feature_length' inconsistent with d/measurement");

  ds.samples.reserve(expected);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t record = ds.samples.size();
    const std::string where = name + ": record " + std::to_string(record) + " (line " + std::to_string(line_no) + ")";
    if (record >= expected) throw DataError(where + ": more records than the header declares");
    const auto fields = io::split(line, ',');
    if (fields.size() < 5) throw DataError(where + ": too few fields");
    LabeledSample s;
    try {
      s.meta.family = family_from_string(fields[0]);
    } catch (const ConfigError& e) {
      throw DataError(where + ": " + e.what());
    }
    s.meta.seed = io::parse_int<std::uint64_t>(fields[1], where);
    s.meta.stream = io::parse_int<std::uint64_t>(fields[2], where);
    const auto np = io::parse_int<std::size_t>(fields[3], where);
    const std::size_t need = 4 + np + 1 + ds.schema.feature_length;
    if (fields.size() != need)
      throw DataError(where + ": expected " + std::to_string(need) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < np; ++k) s.meta.params.push_back(io::parse_double(fields[4 + k], where));
    s.label = io::parse_double(fields[4 + np], where);
    s.features.reserve(ds.schema.feature_length);
    for (std::size_t k = 0; k < ds.schema.feature_length; ++k)
      s.features.push_back(io::parse_double(fields[5 + np + k], where));
    try {
      check_feature_normalization(ds.schema, s);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != expected)
    throw DataError(name + ": truncated, record " + std::to_string(ds.samples.size()) + " missing (header declares " +
                    std::to_string(expected) + ")");
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_dataset(is, path.string());
}

}  // namespace qent
