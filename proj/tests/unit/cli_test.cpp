#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>
#include <set>

#include "gpuprof/formats/profile_file.hpp"
#include "support/cli.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using gpuprof::oracle::TempDir;

using namespace gpuprof::cli_support;

namespace {

/// gen, run and prof for seed 7 through the executable.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const std::string err = build_golden_db(dir_->str());
    ASSERT_TRUE(err.empty()) << err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string db() { return quote(dir_->str("db")); }
  static TempDir* dir_;
};
TempDir* CliPipeline::dir_ = nullptr;

void check_golden(const std::string& name, const std::string& actual) {
  const fs::path path = fs::path(GOLDEN_DIR) / name;
  if (std::getenv("GPUPROF_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
    return;
  }
  ASSERT_TRUE(fs::exists(path)) << path;
  EXPECT_EQ(actual, gpuprof::oracle::slurp(path)) << "golden " << name;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);
  EXPECT_EQ(run_cli("gen").code, 1);  // -o missing
  EXPECT_EQ(run_cli("query db --view sideways").code, 1);
  EXPECT_EQ(run_cli("gen --help").code, 0);
}

TEST(Cli, ConfigErrorExitsTwoWithMessage) {
  TempDir d;
  const auto r = run_cli("gen --threads 0 -o " + quote(d.str("x")));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("ConfigError"), std::string::npos) << r.out;
  const auto q = run_cli("query " + quote(d.str("missing")));
  EXPECT_EQ(q.code, 2);
  fs::create_directories(d.path() / "bad");
  std::ofstream(d.path() / "bad/workload.spec") << "gpuprof-workload 1\nstreams 0\n";
  const auto run = run_cli("run " + quote(d.str("bad/workload.spec")) + " -o " + quote(d.str("m")));
  EXPECT_EQ(run.code, 2);
  EXPECT_NE(run.out.find("ConfigError"), std::string::npos) << run.out;
}

TEST(Cli, GenIsDeterministic) {
  TempDir d;
  ASSERT_EQ(run_cli("gen --seed 7 --threads 2 --streams 2 --kernels 3 -o " + quote(d.str("a"))).code, 0);
  ASSERT_EQ(run_cli("gen --seed 7 --threads 2 --streams 2 --kernels 3 -o " + quote(d.str("b"))).code, 0);
  const auto a = gpuprof::oracle::dir_contents(d.str("a"));
  EXPECT_EQ(a, gpuprof::oracle::dir_contents(d.str("b")));
  EXPECT_TRUE(a.count("workload.spec"));
  EXPECT_TRUE(a.count("binaries/gpu_kernels.gpubin"));
  EXPECT_TRUE(a.count("structure/app.struct"));
}

TEST_F(CliPipeline, NoTraceRunHasNoTraceSections) {
  const std::string out = dir_->str("meas-notrace");
  ASSERT_EQ(run_cli("run " + quote(dir_->str("in/workload.spec")) + " --no-trace -o " + quote(out)).code, 0);
  int profiles = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() != ".prof") continue;
    ++profiles;
    const auto f = gpuprof::formats::decode_sections(gpuprof::formats::read_file(e.path().string()));
    EXPECT_FALSE(f.trace.has_value()) << e.path();
    EXPECT_FALSE(f.id.is_gpu());
  }
  EXPECT_GT(profiles, 0);
}

TEST_F(CliPipeline, DatabaseLayout) {
  for (const char* f : {"meta", "profile.pms", "cct.cms", "trace/0.trace"})
    EXPECT_TRUE(fs::exists(dir_->path() / "db" / f)) << f;
}

TEST_F(CliPipeline, PlansGiveIdenticalDatabases) {
  const std::string alt = dir_->str("db-4-3");
  ASSERT_EQ(run_cli("prof " + quote(dir_->str("meas")) + " -S " + quote(dir_->str("in/structure")) + " -G 4 -t 3 --mem 2K -o " + quote(alt)).code, 0);
  EXPECT_EQ(gpuprof::oracle::dir_contents(alt), gpuprof::oracle::dir_contents(dir_->str("db")));
}

TEST_F(CliPipeline, MissingStructureWarns) {
  const auto r = run_cli("prof " + quote(dir_->str("meas")) + " -S " + quote(dir_->str("nowhere")) + " -o " + quote(dir_->str("db-nostruct")));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning:"), std::string::npos) << r.out;
  const auto flat = run_cli("query " + quote(dir_->str("db-nostruct")) + " --view flat --metric gpu_kernel_time");
  EXPECT_NE(flat.out.find("<unknown function>"), std::string::npos) << flat.out;
}

TEST_F(CliPipeline, FlatRowsDescend) {
  const auto r = run_cli("query " + db() + " --view flat --metric gpu_kernel_time --json", false);
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string lineText;
  std::uint64_t prev = UINT64_MAX;
  std::set<std::string> seen;
  int rows = 0;
  while (std::getline(in, lineText)) {
    const auto j = nlohmann::json::parse(lineText);
    const auto v = j.at("exclusive").get<std::uint64_t>();
    EXPECT_LE(v, prev);
    prev = v;
    EXPECT_TRUE(seen.insert(j.at("module").get<std::string>() + "/" + j.at("routine").get<std::string>()).second);
    ++rows;
  }
  EXPECT_GT(rows, 1);
}

TEST_F(CliPipeline, BadInputsAreDataErrors) {
  EXPECT_EQ(run_cli("query " + db() + " --metric bogus").code, 2);
  EXPECT_EQ(run_cli("query " + db() + " --context 999999").code, 2);
  EXPECT_EQ(run_cli("query " + db() + " --derive 'x=1+*'").code, 2);
  EXPECT_EQ(run_cli("query " + db() + " --view bottomup --function nobody").code, 2);
  EXPECT_EQ(run_cli("query " + db() + " --view bottomup").code, 1);
}

TEST_F(CliPipeline, GoldenOutputs) {
  for (const auto& c : golden_cases()) {
    const auto r = run_cli(c.command + " " + db() + " " + c.args, false);
    ASSERT_EQ(r.code, 0) << c.args;
    check_golden(c.file, r.out);
  }
}
