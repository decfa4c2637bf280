// Runs every acceptance check, including the long training runs, and prints
// one PASS/FAIL line per criterion. Exit status is nonzero if any failed.

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "fuzzyseg/checks.hpp"

int main(int argc, char** argv) {
  fuzzyseg::VerifyOptions opts;
  opts.include_long = true;
  opts.out_dir = std::filesystem::temp_directory_path() / "fuzzyseg_acceptance";
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) {
      opts.out_dir = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      opts.only.push_back(std::atoi(argv[++i]));
    } else if (std::strcmp(argv[i], "--short") == 0) {
      opts.include_long = false;
    } else {
      std::fprintf(stderr, "usage: acceptance [--out DIR] [--only N]... [--short]\n");
      return 2;
    }
  }
  bool ok = true;
  fuzzyseg::run_checks(opts, [&ok](const fuzzyseg::CheckResult& r) {
    std::printf("%s\n", fuzzyseg::format_check(r).c_str());
    std::fflush(stdout);
    if (!r.passed && !r.skipped) ok = false;
  });
  return ok ? 0 : 1;
}
