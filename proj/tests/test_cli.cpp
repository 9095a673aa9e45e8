#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CHARCOM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path fresh_dir() {
  auto dir = std::filesystem::temp_directory_path() / "charcom_cli_test";
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: exit codes") {
  const auto dir = fresh_dir();
  const std::string out = " --out " + dir.string();
  CHECK(run("--help") == 0);
  CHECK(run("--no-such-flag") == 2);
  CHECK(run("generate --cast mira" + out) == 4);
  CHECK(run("--seed 3 train-backbone" + out) == 0);
  CHECK(std::filesystem::exists(dir / "backbone.json"));
  CHECK(run("train-adapter --character mira --refs 5" + out) == 0);
  CHECK(std::filesystem::exists(dir / "adapters" / "mira.chad"));
  CHECK(run("train-adapter --character nobody" + out) == 4);
  CHECK(run("generate --cast mira --method ip-adapter" + out) == 2);
  CHECK(run("generate --cast mira --method charcom" + out) == 0);
  CHECK(run("generate --cast mira --weight-threshold 1.5" + out) == 2);

  {
    std::fstream f(dir / "adapters" / "mira.chad", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK(run("generate --cast mira" + out) == 3);
}
