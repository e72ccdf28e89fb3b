#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "testutil.hpp"

using testutil::read_file;
using testutil::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

// Runs the installed binary named by MASKGATE_CLI with stderr folded in.
RunResult run_cli(const std::string& args) {
  const char* bin = std::getenv("MASKGATE_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "MASKGATE_CLI must point at the cli binary");
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("train writes its artifact set") {
  TempDir tmp;
  const std::string out = tmp.file("run");
  RunResult r = run_cli("train --dataset synthetic:n=16 --model mlp-m --epochs 2"
                        " --seed 1 --out " +
                        out);
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(contains(r.output, "train top1="));
  CHECK(contains(r.output, "wrote "));
  CHECK(file_exists(out + "/checkpoint.mgk"));
  CHECK(file_exists(out + "/trace.csv"));
  CHECK(file_exists(out + "/train.log"));
  CHECK(file_exists(out + "/mask_state.log"));
  CHECK(read_file(out + "/trace.csv").rfind("epoch,module_0\n", 0) == 0);
}

TEST_CASE("train refuses to clobber a checkpoint") {
  TempDir tmp;
  const std::string out = tmp.file("run");
  const std::string args =
      "train --dataset synthetic:n=8 --model mlp-m --epochs 1 --seed 1 --out " + out;
  CHECK(run_cli(args).code == 0);
  RunResult again = run_cli(args);
  CAPTURE(again.output);
  CHECK(again.code == 2);
  CHECK(contains(again.output, "already exists; pass --force to overwrite"));
  CHECK(run_cli(args + " --force").code == 0);
}

TEST_CASE("seeded runs are identical") {
  TempDir tmp;
  const std::string a = tmp.file("a");
  const std::string b = tmp.file("b");
  const std::string common =
      "train --dataset synthetic:n=12 --model mlp-m --epochs 3 --seed 7 --out ";
  CHECK(run_cli(common + a).code == 0);
  CHECK(run_cli(common + b).code == 0);
  const std::string trace_a = read_file(a + "/trace.csv");
  CHECK(!trace_a.empty());
  CHECK(trace_a == read_file(b + "/trace.csv"));
  const std::string ckpt_a = read_file(a + "/checkpoint.mgk");
  CHECK(!ckpt_a.empty());
  CHECK(ckpt_a == read_file(b + "/checkpoint.mgk"));
}

TEST_CASE("eval prints the stored accuracy") {
  TempDir tmp;
  const std::string out = tmp.file("run");
  CHECK(run_cli("train --dataset synthetic:n=16 --model mlp-m --epochs 2 --seed 1"
                " --out " +
                out)
            .code == 0);
  RunResult r = run_cli("eval --dataset synthetic:n=16 --seed 1 --out " + out);
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.rfind("top1=", 0) == 0);
  const double top1 = std::stod(r.output.substr(5));
  CHECK(top1 >= 0.0);
  CHECK(top1 <= 1.0);
}

TEST_CASE("trace re-emits the stored csv") {
  TempDir tmp;
  const std::string out = tmp.file("run");
  CHECK(run_cli("train --dataset synthetic:n=8 --model mlp-m --epochs 3 --seed 2"
                " --out " +
                out)
            .code == 0);
  RunResult r = run_cli("trace --out " + out);
  CHECK(r.code == 0);
  CHECK(r.output == read_file(out + "/trace.csv"));

  TempDir other;
  RunResult missing = run_cli("trace --out " + other.file("nothing"));
  CHECK(missing.code == 2);
  CHECK(contains(missing.output, "cannot open"));
}

TEST_CASE("prune writes a report") {
  TempDir tmp;
  const std::string out = tmp.file("run");
  CHECK(run_cli("train --dataset synthetic:n=16 --model mlp-m --epochs 3 --seed 1"
                " --out " +
                out)
            .code == 0);
  RunResult r = run_cli("prune --dataset synthetic:n=16 --seed 1 --out " + out +
                        " --set prune.finetune_epochs=2");
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(contains(r.output, "parameters: "));
  CHECK(file_exists(out + "/pruned.mgk"));
  CHECK(file_exists(out + "/prune_report.csv"));
  CHECK(file_exists(out + "/prune_report.txt"));
  CHECK(file_exists(out + "/finetune.log"));

  const std::string csv = read_file(out + "/prune_report.csv");
  CHECK(csv.rfind("model,params_before,params_after,params_reduction_pct,", 0) == 0);
  // Row layout: model,before,after,pct,...; the machinery removal alone shrinks it.
  std::size_t line = csv.find('\n') + 1;
  std::size_t c1 = csv.find(',', line);
  std::size_t c2 = csv.find(',', c1 + 1);
  std::size_t c3 = csv.find(',', c2 + 1);
  const long before = std::stol(csv.substr(c1 + 1, c2 - c1 - 1));
  const long after = std::stol(csv.substr(c2 + 1, c3 - c2 - 1));
  CHECK(after < before);

  RunResult again = run_cli("prune --dataset synthetic:n=16 --seed 1 --out " + out);
  CHECK(again.code == 2);
  CHECK(contains(again.output, "already exists"));
}

TEST_CASE("missing inputs exit with code two") {
  TempDir tmp;
  RunResult train_missing =
      run_cli("train --dataset idx:" + tmp.file("img.idx") + "," + tmp.file("lbl.idx") +
              " --model mlp-m --epochs 1 --out " + tmp.file("run"));
  CAPTURE(train_missing.output);
  CHECK(train_missing.code == 2);
  CHECK(contains(train_missing.output, "img.idx"));

  RunResult eval_missing =
      run_cli("eval --dataset synthetic:n=8 --out " + tmp.file("empty"));
  CHECK(eval_missing.code == 2);
  CHECK(contains(eval_missing.output, "cannot open"));

  RunResult bad_selector =
      run_cli("train --dataset nonsense --model mlp-m --epochs 1 --out " +
              tmp.file("run2"));
  CHECK(bad_selector.code == 2);
  CHECK(contains(bad_selector.output, "unknown dataset selector"));
}

TEST_CASE("bad invocations exit with code two") {
  TempDir tmp;
  CHECK(run_cli("bogus-subcommand").code == 2);
  CHECK(run_cli("train --dataset synthetic --model mlp-m --out " + tmp.file("x") +
                " --ste-sign-convention sideways")
            .code == 2);
  CHECK(run_cli("train --model mlp-m --out " + tmp.file("y")).code == 2);
}

TEST_CASE("placement flags reach the model") {
  TempDir tmp;
  RunResult bad = run_cli("train --dataset synthetic:n=8 --model mlp-m --epochs 1"
                          " --mask-placement 0,1 --out " +
                          tmp.file("bad"));
  CAPTURE(bad.output);
  CHECK(bad.code == 2);
  CHECK(contains(bad.output, "at least one block must follow the last mask module"));

  const std::string out = tmp.file("wide");
  RunResult ok = run_cli("train --dataset synthetic:n=8 --model mlp-m --epochs 2"
                         " --set model.widths=8,8,8 --mask-placement 0,1 --seed 1"
                         " --out " +
                         out);
  CAPTURE(ok.output);
  CHECK(ok.code == 0);
  CHECK(read_file(out + "/trace.csv").rfind("epoch,module_0,module_1\n", 0) == 0);
}

TEST_CASE("option plumbing accepts the documented flags") {
  TempDir tmp;
  RunResult r = run_cli("train --dataset synthetic:n=8 --model mlp-m --epochs 1"
                        " --freeze-branches --ste-sign-convention chain"
                        " --set train.holdout=8 --seed 4 --out " +
                        tmp.file("run"));
  CAPTURE(r.output);
  CHECK(r.code == 0);
  CHECK(contains(r.output, "holdout top1="));
}

}  // TEST_SUITE
