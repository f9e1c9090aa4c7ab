#include "deepsum/run_manifest.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deepsum/errors.hpp"

namespace deepsum {
namespace {

constexpr int kManifestVersion = 1;

}  // namespace

std::string RunManifest::make_run_id(const std::string& command, const std::vector<std::string>& arguments,
                                     const std::string& config_text, std::uint64_t seed) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(command);
  for (const auto& a : arguments) mix(a);
  mix(config_text);
  mix(std::to_string(seed));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

std::string RunManifest::now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) t = std::time_t(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::text() const {
  const nlohmann::ordered_json j = {
      {"version", kManifestVersion}, {"command", command},   {"arguments", arguments}, {"config", config_path},
      {"seed", seed},                {"inputs", inputs},     {"outputs", outputs},     {"run_id", run_id},
      {"started", started},          {"finished", finished}, {"status", status},
  };
  return j.dump(2) + "\n";
}

RunManifest RunManifest::parse(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kManifestVersion) {
      throw DataError("unsupported run manifest version " + j.at("version").dump());
    }
    RunManifest m;
    j.at("command").get_to(m.command);
    j.at("arguments").get_to(m.arguments);
    j.at("config").get_to(m.config_path);
    j.at("seed").get_to(m.seed);
    j.at("inputs").get_to(m.inputs);
    j.at("outputs").get_to(m.outputs);
    j.at("run_id").get_to(m.run_id);
    j.at("started").get_to(m.started);
    j.at("finished").get_to(m.finished);
    j.at("status").get_to(m.status);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
}

void RunManifest::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write run manifest " + path.string());
  os << text();
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read run manifest " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::filesystem::path RunManifest::path_for(const std::filesystem::path& output) {
  if (std::filesystem::is_directory(output)) return output / "run_manifest.json";
  return output.string() + ".run_manifest.json";
}

}  // namespace deepsum
