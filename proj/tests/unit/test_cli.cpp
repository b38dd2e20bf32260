#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "rfkit/cli.hpp"
#include "rfkit/tensor.hpp"

using namespace rfkit;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args, std::string* output = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (output) *output = out.str() + err.str();
  return code;
}

}  // namespace

TEST_CASE("cli exit codes") {
  const fs::path dir = fs::temp_directory_path() / "rfkit_unit_cli";
  fs::remove_all(dir);
  std::string text;
  CHECK(run({}, &text) == cli::kUsage);
  CHECK(run({"no-such-command"}) == cli::kUsage);
  CHECK(run({"fit", "--bogus"}, &text) == cli::kUsage);
  CHECK(text.find("--method") != std::string::npos);
  CHECK(run({"simulate", "--minutes", "1", "--factor", "2", "--out", (dir / "x").string()}) == cli::kUsage);
  CHECK(run({"fit", "--data", "/nonexistent/data", "--out", (dir / "y").string()}) == cli::kData);
  CHECK(run({"--version"}, &text) == cli::kOk);
}

TEST_CASE("simulate then fit writes the documented outputs") {
  const fs::path dir = fs::temp_directory_path() / "rfkit_unit_cli2";
  fs::remove_all(dir);
  const std::string sim = (dir / "sim").string(), fit = (dir / "fit").string();
  REQUIRE(run({"simulate", "--kind", "lg", "--dims", "6,7", "--factor", "6", "--out", sim}) == cli::kOk);
  for (const char* f : {"stimulus.rft", "response.rft", "truth.rft", "data.json", "manifest.toml"})
    CHECK(fs::exists(fs::path(sim) / f));
  CHECK(read_tensor(fs::path(sim) / "truth.rft").shape() == Shape{6, 7});

  REQUIRE(run({"fit", "--data", sim, "--spline", "--df", "4,5", "--out", fit}) == cli::kOk);
  for (const char* f : {"coeffs.rft", "strf.rft", "history.csv", "fit.json"}) CHECK(fs::exists(fs::path(fit) / f));
  CHECK(read_tensor(fs::path(fit) / "coeffs.rft").shape() == Shape{20, 1});

  // df beyond the STRF size is a usage error.
  CHECK(run({"fit", "--data", sim, "--spline", "--df", "4,50", "--out", (dir / "bad").string()}) == cli::kUsage);
  fs::remove_all(dir);
}
