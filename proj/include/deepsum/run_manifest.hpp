#pragma once

// Record written beside every command's outputs: what ran, with which
// config and seed, on which inputs, and when. Timestamps honour
// SOURCE_DATE_EPOCH so reproducible runs can produce identical trees.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace deepsum {

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string run_id;
  std::string started;
  std::string finished;
  std::string status = "ok";

  /// 12 hex digits hashed from command, arguments, config text and seed.
  static std::string make_run_id(const std::string& command, const std::vector<std::string>& arguments,
                                 const std::string& config_text, std::uint64_t seed);
  /// UTC "YYYY-MM-DDTHH:MM:SSZ"; SOURCE_DATE_EPOCH when set.
  static std::string now();

  std::string text() const;
  static RunManifest parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);

  /// dir/run_manifest.json for a directory output, file.run_manifest.json
  /// next to a file output.
  static std::filesystem::path path_for(const std::filesystem::path& output);
};

}  // namespace deepsum
