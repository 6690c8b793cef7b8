#include "deepsets/tasks.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deepsets {

namespace {

bool is_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

nlohmann::json tensor_rows(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < t.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tensor_from_rows(const nlohmann::json& rows) {
  if (!rows.is_array() || rows.empty()) throw std::invalid_argument("dataset: elements must be a non-empty array");
  const auto cols = static_cast<Index>(rows.front().size());
  Tensor t(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < t.rows(); ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw std::invalid_argument("dataset: ragged element rows");
    }
    for (Index c = 0; c < cols; ++c) t(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return t;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (is_gzip(path)) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string() + " for writing");
    std::size_t done = 0;
    while (done < text.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(text.size() - done, 1U << 30));
      if (gzwrite(f, text.data() + done, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        throw std::runtime_error("gzip write failed: " + path.string());
      }
      done += chunk;
    }
    if (gzclose(f) != Z_OK) throw std::runtime_error("gzip close failed: " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  if (is_gzip(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw std::runtime_error("cannot open " + path.string());
    std::string text;
    std::array<char, 1 << 16> buffer{};
    int n = 0;
    while ((n = gzread(f, buffer.data(), static_cast<unsigned>(buffer.size()))) > 0) {
      text.append(buffer.data(), static_cast<std::size_t>(n));
    }
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw std::runtime_error("gzip read failed: " + path.string());
    return text;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const LabeledSetDataset& data, const std::filesystem::path& path) {
  data.validate();
  std::string text;
  for (std::size_t i = 0; i < data.size(); ++i) {
    nlohmann::json meta = data.meta;
    meta["task"] = std::string(to_string(data.task));
    if (!data.parameters.empty() && std::isfinite(data.parameters[i])) meta["param"] = data.parameters[i];
    const nlohmann::json line{{"elements", tensor_rows(data.sets[i])}, {"target", data.targets[i]}, {"meta", meta}};
    text += line.dump();
    text += '\n';
  }
  write_text_file(path, text);
}

LabeledSetDataset read_jsonl(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  LabeledSetDataset data;
  std::istringstream lines(text);
  std::string line;
  bool first = true;
  bool has_params = false;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.contains("elements") || !obj.contains("target")) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": missing elements or target");
    }
    nlohmann::json meta = obj.value("meta", nlohmann::json::object());
    if (first) {
      data.task = task_from_string(meta.value("task", std::string("population")));
      has_params = meta.contains("param");
      data.meta = meta;
      data.meta.erase("param");
      first = false;
    }
    data.sets.push_back(tensor_from_rows(obj["elements"]));
    data.targets.push_back(obj["target"].get<double>());
    if (has_params) data.parameters.push_back(meta.value("param", std::numeric_limits<double>::quiet_NaN()));
  }
  data.validate();
  return data;
}

}  // namespace deepsets
