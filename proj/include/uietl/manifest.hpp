#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uietl/error.hpp"

namespace uietl {

enum class SourceTag { kReference, kNonReference };

inline std::string to_string(SourceTag t) {
  return t == SourceTag::kReference ? "reference" : "non-reference";
}

inline SourceTag parse_source_tag(const std::string& s) {
  if (s == "reference") return SourceTag::kReference;
  if (s == "non-reference") return SourceTag::kNonReference;
  throw FormatError("unknown source tag '" + s + "'");
}

struct ManifestEntry {
  std::filesystem::path input;
  std::optional<std::filesystem::path> target;
  SourceTag source = SourceTag::kReference;
};

/// Tab-separated dataset listing: `input <TAB> target-or-"-" <TAB> source-tag`.
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  static DatasetManifest parse(std::istream& in, const std::filesystem::path& root,
                               bool check_exists = true) {
    DatasetManifest m;
    m.root = root;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, '\t')) fields.push_back(f);
      if (fields.size() != 3) {
        throw FormatError("manifest line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      }
      ManifestEntry e;
      e.input = resolve(root, fields[0]);
      if (fields[1] != "-") e.target = resolve(root, fields[1]);
      e.source = parse_source_tag(fields[2]);
      if (check_exists) {
        if (!std::filesystem::exists(e.input)) throw IoError("missing input " + e.input.string());
        if (e.target && !std::filesystem::exists(*e.target))
          throw IoError("missing target " + e.target->string());
      }
      m.entries.push_back(std::move(e));
    }
    return m;
  }

  static DatasetManifest load(const std::filesystem::path& path, bool check_exists = true) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    return parse(in, path.parent_path(), check_exists);
  }

  void write(std::ostream& out) const {
    for (const auto& e : entries) {
      out << e.input.string() << '\t' << (e.target ? e.target->string() : "-") << '\t'
          << to_string(e.source) << '\n';
    }
  }

 private:
  static std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || root.empty() ? path : root / path;
  }
};

}  // namespace uietl
