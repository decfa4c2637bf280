#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"
#include "fuzzyseg/tensor_io.hpp"

namespace fuzzyseg {
namespace {

std::string file_name(const std::string& role, const std::string& entry) { return role + "." + entry + ".ftns"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config, const TrainResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  nlohmann::json manifest;
  manifest["format"] = "fuzzyseg-checkpoint";
  manifest["version"] = 1;
  manifest["iteration"] = result.iterations;
  manifest["config"] = format_config(config);
  nlohmann::json entries = nlohmann::json::array();
  const std::pair<const char*, const ParameterStore*> stores[] = {{"student", &result.student},
                                                                  {"teacher", &result.teacher}};
  for (const auto& [role, store] : stores) {
    for (const auto& [name, t] : store->entries()) {
      const std::string f = file_name(role, name);
      io::save_tensor(dir / f, t);
      entries.push_back({{"role", role}, {"name", name}, {"file", f}});
    }
  }
  manifest["entries"] = entries;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write checkpoint manifest in '" + dir.string() + "'");
  os << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in '" + dir.string() + "'");
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  if (m.value("format", "") != "fuzzyseg-checkpoint") throw IoError("not a checkpoint manifest");
  Checkpoint ck;
  std::istringstream cfg(m.at("config").get<std::string>());
  ck.config = parse_config(cfg);
  ck.iteration = m.at("iteration").get<std::size_t>();
  for (const auto& e : m.at("entries")) {
    const std::string role = e.at("role").get<std::string>();
    Tensor t = io::load_tensor(dir / e.at("file").get<std::string>());
    if (role == "student") ck.student.set(e.at("name").get<std::string>(), std::move(t));
    else if (role == "teacher") ck.teacher.set(e.at("name").get<std::string>(), std::move(t));
    else throw IoError("checkpoint: unknown role '" + role + "'");
  }
  return ck;
}

}  // namespace fuzzyseg
