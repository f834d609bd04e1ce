/* Copyright 2026 The rlsdeconv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlsd/rlsd.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args) {
  static int n = 0;
  const fs::path err = fs::temp_directory_path() / ("rlsd_cli_err_" + std::to_string(n++));
  const std::string cmd = std::string(RLSD_CLI) + " " + args + " 2>" + err.string();
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf{};
  size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  fs::remove(err);
  return r;
}

std::vector<nlohmann::json> lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(nlohmann::json::parse(l));
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rlsd_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// PSNR of the blurred input against the observed window of the sharp image.
double input_psnr(const fs::path& dir, const std::string& stem) {
  rlsd_image* y = nullptr;
  rlsd_image* x = nullptr;
  rlsd_image* xo = nullptr;
  rlsd_kernel* k = nullptr;
  REQUIRE(rlsd_image_load((dir / (stem + "_blurred.png")).string().c_str(), &y) == RLSD_OK);
  REQUIRE(rlsd_image_load((dir / (stem + "_sharp.png")).string().c_str(), &x) == RLSD_OK);
  REQUIRE(rlsd_kernel_load((dir / (stem + "_kernel.txt")).string().c_str(), &k) == RLSD_OK);
  REQUIRE(rlsd_observed_region(x, k, rlsd_image_height(y), rlsd_image_width(y), &xo) == RLSD_OK);
  double p = 0.0;
  REQUIRE(rlsd_score(y, xo, 0, &p, nullptr) == RLSD_OK);
  rlsd_image_free(y);
  rlsd_image_free(x);
  rlsd_image_free(xo);
  rlsd_kernel_free(k);
  return p;
}

const fs::path& synthetic() {
  static const fs::path dir = [] {
    const fs::path d = scratch("syn");
    const Run r = cli("synthesize --count 3 --size 64 --seed 5 --out " + d.string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with 1 and name the problem") {
  const fs::path& d = synthetic();
  const Run missing = cli("deblur -i " + (d / "000_blurred.png").string() + " -k /no/such/kernel.txt");
  CHECK(missing.code == 1);
  CHECK(missing.err.find("/no/such/kernel.txt") != std::string::npos);

  const Run bad_input = cli("deblur -i /no/such/image.png -k " + (d / "000_kernel.txt").string());
  CHECK(bad_input.code == 1);
  CHECK(bad_input.err.find("/no/such/image.png") != std::string::npos);

  CHECK(cli("deblur --no-such-flag").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("deblur -i x.png -k k.txt --sigma -1").code == 1);
  CHECK(cli("--help").code == 0);
  CHECK(cli("train --out " + (d / "t").string() + " --config /no/such.ini").code == 1);
}

TEST_CASE("synthesize writes a manifest and files") {
  const fs::path& d = synthetic();
  const auto man = lines(slurp(d / "manifest.jsonl"));
  REQUIRE(man.size() == 3);
  for (const auto& m : man) {
    CHECK(fs::exists(d / m["blurred"].get<std::string>()));
    CHECK(fs::exists(d / m["sharp"].get<std::string>()));
    CHECK(fs::exists(d / m["kernel"].get<std::string>()));
    CHECK(m["sigma"].get<double>() > 0.0);
  }
}

TEST_CASE("deblur beats the blurred input") {
  const fs::path& d = synthetic();
  const fs::path out = scratch("deblur");
  const Run r = cli("deblur -i " + (d / "000_blurred.png").string() + " -k " + (d / "000_kernel.txt").string() +
                    " --ground-truth " + (d / "000_sharp.png").string() + " -o " + (out / "r.png").string());
  REQUIRE(r.code == 0);
  const auto j = lines(r.out);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["psnr"].get<double>() > input_psnr(d, "000") + 1.0);
  CHECK(fs::exists(out / "r.png"));
}

TEST_CASE("--steps sets the trace length") {
  const fs::path& d = synthetic();
  const fs::path out = scratch("steps");
  const Run r = cli("deblur -i " + (d / "001_blurred.png").string() + " -k " + (d / "001_kernel.txt").string() +
                    " --steps 20 --trace " + (out / "t.json").string());
  REQUIRE(r.code == 0);
  const auto t = nlohmann::json::parse(slurp(out / "t.json"));
  CHECK(t["steps"] == 20);
  CHECK(t["cg_iterations"].size() == 20);
  CHECK(t["sigma_estimated"] == true);
  CHECK(lines(r.out)[0]["steps"] == 20);
}

TEST_CASE("directory input scores every image and aggregates") {
  const fs::path& d = synthetic();
  const fs::path in = scratch("dir_in"), gt = scratch("dir_gt"), ks = scratch("dir_k"), out = scratch("dir_out");
  for (const char* s : {"000", "001", "002"}) {
    fs::copy_file(d / (std::string(s) + "_blurred.png"), in / (std::string(s) + ".png"));
    fs::copy_file(d / (std::string(s) + "_sharp.png"), gt / (std::string(s) + ".png"));
    fs::copy_file(d / (std::string(s) + "_kernel.txt"), ks / (std::string(s) + ".txt"));
  }
  const std::string base =
      "deblur -i " + in.string() + " -k " + ks.string() + " --ground-truth " + gt.string() + " --sigma 0.02";
  const Run r = cli(base + " -o " + out.string() + " --workers 2");
  REQUIRE(r.code == 0);
  const auto j = lines(r.out);
  REQUIRE(j.size() == 4);
  CHECK(j[3].contains("mean_psnr"));
  for (const char* s : {"000.png", "001.png", "002.png"}) CHECK(fs::exists(out / s));

  // output order and values do not depend on the worker count
  const Run serial = cli(base + " --workers 1");
  REQUIRE(serial.code == 0);
  const auto js = lines(serial.out);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(js[i]["image"] == j[i]["image"]);
    CHECK(js[i]["psnr"] == j[i]["psnr"]);
  }
}

TEST_CASE("same seed gives identical output") {
  const fs::path& d = synthetic();
  const std::string args = "deblur -i " + (d / "002_blurred.png").string() + " -k " +
                           (d / "002_kernel.txt").string() + " --ground-truth " + (d / "002_sharp.png").string() +
                           " --seed 9";
  const Run a = cli(args), b = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const fs::path s1 = scratch("seed1"), s2 = scratch("seed2");
  CHECK(cli("synthesize -n 2 --size 40 --seed 3 -o " + s1.string()).out ==
        cli("synthesize -n 2 --size 40 --seed 3 -o " + s2.string()).out);
  CHECK(slurp(s1 / "000_kernel.txt") == slurp(s2 / "000_kernel.txt"));
}

TEST_CASE("grad-check passes and reports JSON lines") {
  const Run r = cli("grad-check --seed 2");
  CHECK(r.code == 0);
  const auto j = lines(r.out);
  REQUIRE(j.size() > 3);
  CHECK(j.back()["pass"] == true);
  for (size_t i = 0; i + 1 < j.size(); ++i) CHECK(j[i]["rel_err"].get<double>() <= 1e-4);
}

TEST_CASE("train, bench and convergence run on a tiny configuration") {
  const fs::path d = scratch("train");
  std::ofstream(d / "tiny.ini") << "[model]\nsteps = 1\nreg_filters = 2\nreg_size = 3\nwiener_filters = 2\n"
                                   "wiener_size = 3\n[data]\ncrop = 24\nkernel_min = 5\nkernel_max = 5\n"
                                   "[train]\nbatch = 1\nepochs = 1\nbatches_per_epoch = 2\nval_images = 1\n"
                                   "val_size = 24\n";
  const std::string cfg = (d / "tiny.ini").string();
  const Run t = cli("train --config " + cfg + " --out " + (d / "run").string());
  REQUIRE(t.code == 0);
  CHECK(t.out.find("latest.rlsd") != std::string::npos);
  CHECK(lines(slurp(d / "run" / "metrics.jsonl")).size() == 1);

  const std::string ck = (d / "run" / "latest.rlsd").string();
  const Run b = cli("bench -c " + ck + " --size 24 --kernel-size 5 --repeats 1");
  REQUIRE(b.code == 0);
  CHECK(nlohmann::json::parse(b.out)["forward_s"].get<double>() > 0.0);

  const Run c = cli("convergence -c " + ck + " --config " + cfg + " --images 2 --size 24 --steps 1,2 --cg-max 5,50");
  REQUIRE(c.code == 0);
  CHECK(c.out.rfind("steps,cg_cap,psnr,mean_cg_iters\n", 0) == 0);
  CHECK(std::count(c.out.begin(), c.out.end(), '\n') == 5);
}
