#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visnli/instance.hpp"

namespace visnli::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

NLIInstance ranked3(std::string id, std::string premise, std::string e, std::string n, std::string c);
NLIInstance ranked2(std::string id, std::string premise, std::string e, std::string ne);

// n three-way instances whose hypothesis texts are all distinct.
std::vector<NLIInstance> synthetic_instances(std::size_t n, const std::string& prefix = "s");

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

// SNLI-style row.
nlohmann::json snli_row(const std::string& caption, const std::string& premise, const std::string& hypothesis,
                        const std::string& gold, const std::string& hardness = "");

// All-mock config over `source`; methods map method name -> backend id.
nlohmann::json mock_config(const std::filesystem::path& source, const std::filesystem::path& out,
                           const std::filesystem::path& cache, const nlohmann::json& methods);

std::string read_file_text(const std::filesystem::path& path);

}  // namespace visnli::testing
