// Copyright 2026 The dlcz-repeater Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DLCZ_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("link-metrics --detector spad").code, 1);
  EXPECT_EQ(run("link-metrics --pc 1.5").code, 1);
  EXPECT_EQ(run("link-metrics --config /nonexistent.json").code, 1);
}

TEST(Cli, LinkMetricsCsv) {
  const auto r = run("link-metrics --pc 0.01 --distance-km 50 --detector pnrd");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("detector,L_km,p_c,eta_s,alpha,herald_prob,fidelity\n", 0), 0u);
  EXPECT_NE(r.out.find("\npnrd,50,0.01,"), std::string::npos);
  EXPECT_EQ(run("link-metrics --distance-km 0").code, 1);
}

TEST(Cli, JsonFormatAndBothDetectors) {
  const auto r = run("repeater-metrics --format json --distance-km 200");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.front(), '[');
  EXPECT_NE(r.out.find("\"pnrd\""), std::string::npos);
  EXPECT_NE(r.out.find("\"nrpd\""), std::string::npos);
}

TEST(Cli, QkdRateAndOptimum) {
  const auto q = run("qkd-rate --distance-km 300 --detector nrpd --scenario repeater --exact-click");
  ASSERT_EQ(q.code, 0);
  EXPECT_NE(q.out.find("nrpd,repeater,300,"), std::string::npos);
  const auto o = run("optimal-pc --distance-km 500 --detector pnrd --scenario direct");
  ASSERT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("pnrd,direct,500,ok,0.02"), std::string::npos);
}

TEST(Cli, ConfigFileAndOutputDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "dlcz_cli_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"detector": "pnrd", "scenario": "direct",
    "axes": [{"name": "distance_km", "min": 100, "max": 200, "points": 2}]})";
  const auto r = run("sweep --config " + cfg.string() + " --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0);
  std::ifstream f(dir / "o" / "sweep.csv");
  std::string header, row1, row2, extra;
  std::getline(f, header);
  std::getline(f, row1);
  std::getline(f, row2);
  EXPECT_EQ(header.rfind("distance_km,detector,scenario,p_c,status", 0), 0u);
  EXPECT_EQ(row1.rfind("100,pnrd,direct,", 0), 0u);
  EXPECT_EQ(row2.rfind("200,pnrd,direct,", 0), 0u);
  EXPECT_FALSE(std::getline(f, extra));

  std::ofstream(dir / "bad.json") << R"({"detectr": "pnrd"})";
  EXPECT_EQ(run("link-metrics --config " + (dir / "bad.json").string()).code, 1);
  std::filesystem::remove_all(dir);
}

TEST(Cli, ValidatePasses) {
  const auto r = run("validate");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
}

}  // namespace
