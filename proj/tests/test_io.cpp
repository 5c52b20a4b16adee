#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "tnt/io/apps.hpp"

using namespace tnt;
using namespace tnt::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tnt_io_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SystemConfig quiet_config(bool symmetric) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  SystemConfig c;
  if (symmetric) symm_type_set(c, "U(1)", 1);
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::usage;
}

RunSpec parse_ok(App a, const std::vector<std::string>& args) {
  auto r = parse_args(a, args);
  EXPECT_TRUE(r.spec.has_value()) << r.output;
  return r.spec.value_or(RunSpec{});
}

std::vector<std::string> split(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST(ParseArgs, GroundStateCommandLine) {
  auto s = parse_ok(App::ground_state, split("-d output/bh_harm --system=boson --length 100 --n-max 3 -c 100 "
                                             "--qnum-rand-state 100 --Ub 5 --Jb -1 --E-harm 0.01 --Ex1N --Ex2bdagb=ap"));
  EXPECT_EQ(s.directory, "output/bh_harm");
  EXPECT_EQ(s.system, "boson");
  EXPECT_EQ(s.length, 100u);
  EXPECT_EQ(s.n_max, 3u);
  EXPECT_EQ(s.chi, 100u);
  EXPECT_EQ(s.qnum_rand_state, 100);
  EXPECT_EQ(s.ub, 5.0);
  EXPECT_EQ(s.jb, -1.0);
  EXPECT_EQ(s.e_harm, 0.01);
  EXPECT_EQ(s.precision, 1e-4);
  EXPECT_EQ(s.observables, (std::vector<std::string>{"Ex1N", "Ex2bdagb"}));
}

TEST(ParseArgs, EvolutionCommandLine) {
  std::string cdw;
  for (int j = 0; j < 51; ++j) cdw += j % 2 ? '1' : '0';
  auto s = parse_ok(App::evolve, split("-d output/bh_cdw --system=boson --length 51 --n-max 1 --Jb -1 --Ex1N -t 400 "
                                       "-b 10 --dt 0.01 -c 200 --qnum-config-state " + cdw));
  EXPECT_EQ(s.length, 51u);
  EXPECT_EQ(s.n_max, 1u);
  EXPECT_EQ(s.steps, 400u);
  EXPECT_EQ(s.save_every, 10u);
  EXPECT_EQ(s.dt, 0.01);
  EXPECT_EQ(s.chi, 200u);
  EXPECT_EQ(s.qnum_config_state, cdw);
  EXPECT_EQ(observable_schedule(s.steps, s.save_every).size(), 41u);
}

TEST(ParseArgs, UsageErrors) {
  auto zero = parse_args(App::ground_state, split("--system=boson --length 0 --rand-state"));
  EXPECT_EQ(zero.exit_code, 2);
  EXPECT_FALSE(zero.spec);

  auto two = parse_args(App::ground_state, split("--system=boson --length 4 --rand-state --config-state 0101"));
  EXPECT_EQ(two.exit_code, 2);
  EXPECT_NE(two.output.find("exactly one initial state"), std::string::npos);

  auto missing = parse_args(App::evolve, split("--dt 0.1"));
  EXPECT_EQ(missing.exit_code, 2);
  for (const char* flag : {"--system", "--length", "--steps", "initial state"})
    EXPECT_NE(missing.output.find(flag), std::string::npos) << flag;

  EXPECT_EQ(parse_args(App::ground_state, split("--system=boson --length 4 --rand-state --bogus")).exit_code, 2);
  EXPECT_EQ(parse_args(App::ground_state, split("--system=boson --length 4 --rand-state --Ex2bdagb=xy")).exit_code, 2);
  EXPECT_EQ(parse_args(App::ground_state, split("--system=boson --length 4 --rand-state -t 5")).exit_code, 2);
  EXPECT_EQ(parse_args(App::evolve, split("--system=boson --length 4 --rand-state -t 5 --dt 0")).exit_code, 2);

  auto help = parse_args(App::ground_state, split("--help"));
  EXPECT_EQ(help.exit_code, 0);
  EXPECT_NE(help.output.find("--qnum-rand-state"), std::string::npos);
}

TEST(ParseArgs, JsonRoundTrip) {
  auto s = parse_ok(App::evolve, split("--system=spin --spin 1 --length 6 --Jxy 1 --Jz 0.5 -t 3 --config-state 012012 --Ex1Sz"));
  auto back = run_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
  EXPECT_EQ(to_json(back), to_json(s));
}

class ResultModes : public ::testing::TestWithParam<bool> {
 protected:
  SystemConfig cfg = quiet_config(GetParam());
};

TEST_P(ResultModes, StateRoundTripIsBitExact) {
  configure_basis(cfg, boson_basis(2));
  std::mt19937_64 rng(21);
  auto psi = mps_random(boson_basis(2), 5, 7, 4, rng, cfg);
  ResultFile r;
  r.kind = "ground-state";
  r.config = cfg;
  r.state = psi.copy();
  r.observables["Ex1N"] = {evaluate_observables(psi, {"Ex1N"}, cfg).at("Ex1N")};
  r.series["energy_per_sweep"] = {"sweep", {1.0 / 3.0, -2.5}};
  const auto file = scratch("state") / "r.h5";
  write_result(file.string(), r);
  auto back = load_result(file.string());

  ASSERT_TRUE(back.state);
  ASSERT_EQ(back.state->length(), psi.length());
  EXPECT_EQ(back.state->symmetric(), psi.symmetric());
  EXPECT_EQ(mps_amplitudes(*back.state), mps_amplitudes(psi));
  for (std::size_t j = 0; j < psi.length(); ++j) {
    if (psi.symmetric())
      EXPECT_EQ(std::get<BlockTensor>(back.state->sites[j]->payload()).structure(),
                std::get<BlockTensor>(psi.sites[j]->payload()).structure());
    EXPECT_EQ(back.state->sites[j]->labels(), "LRD");
  }
  EXPECT_EQ(back.state->schmidt, psi.schmidt);
  EXPECT_EQ(back.observables.at("Ex1N").front(), r.observables.at("Ex1N").front());
  EXPECT_EQ(back.series.at("energy_per_sweep").values, r.series.at("energy_per_sweep").values);
  EXPECT_EQ(back.series.at("energy_per_sweep").axis, "sweep");
  EXPECT_EQ(sys_info_print(back.config), sys_info_print(cfg));
  EXPECT_EQ(back.library_version, kLibraryVersion);
}

INSTANTIATE_TEST_SUITE_P(DenseAndU1, ResultModes, ::testing::Values(false, true),
                         [](const auto& info) { return info.param ? "U1" : "Dense"; });

TEST(ResultFile, ConfigReproducesTruncationDecisions) {
  auto cfg = quiet_config(false);
  {
    std::ostringstream sink;
    DiagnosticCapture cap(&sink);
    trunc_err_tol_set(cfg, 0.2);
    rel_trunc_tol_set(cfg, 1e-3);
    trunc_type_set(cfg, TruncationType::sum_squares);
  }
  ResultFile r;
  r.kind = "ground-state";
  r.config = cfg;
  const auto file = scratch("cfg") / "r.h5";
  write_result(file.string(), r);
  auto back = load_result(file.string());
  EXPECT_EQ(sys_info_print(back.config), sys_info_print(cfg));
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = Matrix::Random(6, 5);
    auto a = truncated_svd(m, cfg.truncation(4));
    auto b = truncated_svd(m, back.config.truncation(4));
    EXPECT_EQ(a.spectrum.kept_dim, b.spectrum.kept_dim);
    EXPECT_EQ(a.spectrum.values, b.spectrum.values);
  }
}

TEST(ResultFile, BytesDifferOnlyInTimestamp) {
  auto cfg = quiet_config(true);
  configure_basis(cfg, boson_basis(1));
  std::mt19937_64 rng(8);
  ResultFile r;
  r.kind = "evolution";
  r.config = cfg;
  r.state = mps_random(boson_basis(1), 4, 4, 2, rng, cfg);
  r.times = {0.0, 0.1};
  r.steps = {0, 10};
  r.observables["Ex1N"] = {Matrix::Zero(1, 4), Matrix::Ones(1, 4)};
  auto dir = scratch("bytes");
  write_result((dir / "a.h5").string(), r);
  std::this_thread::sleep_for(std::chrono::milliseconds(1100));
  write_result((dir / "b.h5").string(), r);
  const auto a = bytes_of(dir / "a.h5"), b = bytes_of(dir / "b.h5");
  ASSERT_EQ(a.size(), b.size());
  const auto ta = load_result((dir / "a.h5").string()).created, tb = load_result((dir / "b.h5").string()).created;
  const auto pa = a.find(ta), pb = b.find(tb);
  ASSERT_NE(pa, std::string::npos);
  ASSERT_EQ(pa, pb);
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] != b[k]) EXPECT_TRUE(k >= pa && k < pa + ta.size()) << "byte " << k;
}

TEST(ResultFile, MalformedFilesAreParseErrors) {
  auto dir = scratch("bad");
  std::ofstream(dir / "text.h5") << "not hdf5";
  EXPECT_EQ(kind_of([&] { load_result((dir / "text.h5").string()); }), ErrorKind::parse_error);
  EXPECT_EQ(kind_of([&] { load_result((dir / "absent.h5").string()); }), ErrorKind::parse_error);

  ResultFile r;
  r.kind = "ground-state";
  write_result((dir / "ok.h5").string(), r);
  {
    h5::Handle f(H5Fopen((dir / "ok.h5").string().c_str(), H5F_ACC_RDWR, H5P_DEFAULT), H5Fclose);
    H5Ldelete(f, "state", H5P_DEFAULT);
  }
  try {
    load_result((dir / "ok.h5").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse_error);
    EXPECT_NE(std::string(e.what()).find("/state"), std::string::npos);
  }
}

TEST(ResultFile, VersionMismatchWarnsAndLoads) {
  ResultFile r;
  r.kind = "ground-state";
  const auto file = scratch("ver") / "r.h5";
  write_result(file.string(), r);
  {
    h5::Handle f(H5Fopen(file.string().c_str(), H5F_ACC_RDWR, H5P_DEFAULT), H5Fclose);
    H5Adelete(f, "format_version");
    h5::attr(f, "format_version", std::int64_t(kFormatVersion + 1));
  }
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  auto back = load_result(file.string());
  EXPECT_EQ(back.format_version, kFormatVersion + 1);
  EXPECT_NE(sink.str().find("warning"), std::string::npos);
}

TEST(Apps, GroundStateWritesResultAndManifest) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  auto dir = scratch("gs");
  auto s = parse_ok(App::ground_state, split("-d " + dir.string() + " --system=spin --length 6 --Jxy 1 --Jz 1 -c 8 "
                                             "--qnum-rand-state 3 --Ex1Sz --Ex2SpSm=ap --csv"));
  const auto file = run_ground_state(s);
  auto r = load_result(file);
  EXPECT_EQ(r.kind, "ground-state");
  ASSERT_TRUE(r.state);
  EXPECT_EQ(r.observables.at("Ex2SpSm").front().rows(), 6);
  EXPECT_EQ(r.observables.at("Ex1Sz").front().cols(), 6);
  const auto& e = r.series.at("energy_per_sweep").values;
  EXPECT_LT(e.back(), e.front());
  auto m = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  EXPECT_EQ(m.at("system").at("summary").get<std::string>(), sys_info_print(r.config));
  EXPECT_EQ(run_spec_from_json(m.at("parameters")).length, 6u);
  EXPECT_TRUE(fs::exists(dir / "Ex1Sz.csv"));
}

TEST(Apps, ResumedEvolutionMatchesSingleRun) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  const std::string common = " --system=boson --length 8 --n-max 1 --Jb -1 --Ex1N --Ex2bdagb=ap --dt 0.02 -c 16 -b 5";
  auto dir = scratch("resume");
  const auto whole = run_evolve(parse_ok(App::evolve, split("-d " + (dir / "whole").string() + common +
                                                          " -t 40 --qnum-config-state 10101010")));
  const auto first = run_evolve(parse_ok(App::evolve, split("-d " + (dir / "first").string() + common +
                                                          " -t 20 --qnum-config-state 10101010")));
  const auto second = run_evolve(
      parse_ok(App::evolve, split("-d " + (dir / "second").string() + common + " -t 20 --load " + first)));
  const auto zero = run_evolve(
      parse_ok(App::evolve, split("-d " + (dir / "zero").string() + common + " -t 0 --load " + first)));

  auto w = load_result(whole), a = load_result(first), b = load_result(second), z = load_result(zero);
  EXPECT_EQ(b.steps.back(), w.steps.back());
  EXPECT_NEAR(b.times.back(), w.times.back(), 1e-14);
  for (const auto& key : {"Ex1N", "Ex2bdagb"}) {
    EXPECT_LT((b.observables.at(key).back() - w.observables.at(key).back()).cwiseAbs().maxCoeff(), 1e-12) << key;
    EXPECT_LT((z.observables.at(key).back() - a.observables.at(key).back()).cwiseAbs().maxCoeff(), 1e-12) << key;
  }
  EXPECT_NEAR(b.series.at("accum_trunc_err").values.back(), w.series.at("accum_trunc_err").values.back(), 1e-12);
}

TEST(Apps, ExitCodes) {
  std::ostringstream sink;
  DiagnosticCapture cap(&sink);
  auto* old = std::cerr.rdbuf(sink.rdbuf());
  const char* bad[] = {"tntGS_cl", "--length", "0"};
  EXPECT_EQ(app_main(App::ground_state, 3, bad), kExitUsage);
  auto dir = scratch("exit").string();
  std::vector<std::string> infeasible{"tntGS_cl", "-d", dir, "--system=boson", "--length", "3", "--n-max", "1",
                                      "--qnum-rand-state", "5"};
  std::vector<const char*> argv;
  for (auto& a : infeasible) argv.push_back(a.c_str());
  EXPECT_EQ(app_main(App::ground_state, int(argv.size()), argv.data()), kExitUsage);
  std::cerr.rdbuf(old);
}
