#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "faid/campaign.hpp"
#include "faid/cli.hpp"
#include "faid/errors.hpp"
#include "faid/grid_io.hpp"

using namespace faid;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args, const CliHooks &hooks = {}) {
  args.insert(args.begin(), "faid");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, hooks);
  return { code, out.str(), err.str() };
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return { std::istreambuf_iterator<char>(in), {} };
}

void spit(const fs::path &p, const std::string &text) { std::ofstream(p, std::ios::binary) << text; }

// Last data row of a CSV, split on commas.
std::vector<std::string> last_row(const std::string &csv) {
  std::istringstream in(csv);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  std::vector<std::string> cells;
  std::istringstream row(last);
  for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
  return cells;
}

class Workspace {
 public:
  explicit Workspace(const std::string &name)
      : dir_(fs::temp_directory_path() / ("faid_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  fs::path config(const std::string &text, const std::string &name = "run.cfg") const {
    spit(dir_ / name, text);
    return dir_ / name;
  }
  fs::path operator/(const std::string &s) const { return dir_ / s; }

 private:
  fs::path dir_;
};

const std::string kStraight = R"(device.kind = straight
grid.dx_nm = 20
wavelengths.list_um = 1.32
litho.model = gaussian
litho.preset = duv
optimizer.max_iterations = 2
)";

class BrokenVjp final : public LithoModel {
 public:
  DensityGrid predict(const DensityGrid &mask) const override { return mask; }
  bool differentiable() const override { return true; }
  ScalarField vjp(const DensityGrid &mask, const ScalarField &cot) const override {
    ScalarField out = cot;
    out.values *= 1.5;
    (void)mask;
    return out;
  }
  std::string name() const override { return "broken-vjp"; }
};

}  // namespace

TEST_CASE("exit codes for bad input") {
  Workspace ws("codes");
  const auto out = (ws / "out").string();

  const Run missing = cli({ "--config", ws.config("device.kind = straight\nwavelengths.list_um = 1.32\n"
                                                  "litho.model = identity\n").string(),
                            "--out-dir", out, "evaluate" });
  CHECK(missing.code == 2);
  CHECK(missing.err.find("grid.dx") != std::string::npos);

  const fs::path cfg = ws.config(kStraight);
  CHECK(cli({ "--config", (ws / "absent.cfg").string(), "evaluate" }).code == 2);
  CHECK(cli({ "--config", cfg.string(), "--out-dir", out }).code == 2);
  CHECK(cli({ "--config", cfg.string(), "--out-dir", out, "optimize", "--mode", "both" }).code == 2);

  spit(ws / "params.csv", "index,value\n0,0.5\n1,0.5\n");
  const Run mismatch = cli({ "--config", cfg.string(), "--out-dir", out, "evaluate", "--params",
                             (ws / "params.csv").string() });
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("expects 1") != std::string::npos);

  spit(ws / "bad_mask.txt", "2 2 0.1 0 0\n0.5 0.5\n0.5 abc\n");
  const Run bad = cli({ "--config", cfg.string(), "--out-dir", out, "predict", "--mask",
                        (ws / "bad_mask.txt").string() });
  CHECK(bad.code == 2);
  CHECK(bad.err.find("byte 24") != std::string::npos);

  const fs::path ext = ws.config(
      "device.kind = straight\ngrid.dx_nm = 20\nwavelengths.list_um = 1.32\nlitho.model = external\n"
      "litho.command = exit 7\n",
      "ext.cfg");
  const Run failed = cli({ "--config", ext.string(), "--out-dir", out, "evaluate" });
  CHECK(failed.code == 3);
}

TEST_CASE("gradcheck exit codes") {
  Workspace ws("gradcheck");
  const fs::path cfg = ws.config(R"(device.kind = ybranch
grid.dx_nm = 20
wavelengths.list_um = 1.32
litho.model = gaussian
litho.preset = duv
)");
  const auto out = (ws / "out").string();
  const Run ok = cli({ "--config", cfg.string(), "--out-dir", out, "gradcheck", "--method", "numeric",
                       "--against", "chain" });
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  const std::string csv = slurp(ws / "out" / "gradcheck.csv");
  CHECK(csv.rfind("# config_fingerprint=", 0) == 0);
  CHECK(csv.find("index,numeric,chain,rel_error\n") != std::string::npos);
  CHECK(last_row(csv)[0] == "9");

  CliHooks broken;
  broken.make_litho = [](const RunConfig &) { return std::make_shared<BrokenVjp>(); };
  const Run neg = cli({ "--config", cfg.string(), "--out-dir", out, "gradcheck", "--method", "chain",
                        "--against", "numeric" },
                      broken);
  CHECK(neg.code == 1);
  CHECK(neg.out.find("FAIL") != std::string::npos);
}

TEST_CASE("optimize, predict and evaluate agree; runs are deterministic") {
  Workspace ws("pipeline");
  const fs::path cfg = ws.config(kStraight + "optimizer.p0_jitter = 0.2\nrun.seed = 5\n");
  const auto a = (ws / "a").string(), b = (ws / "b").string();
  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", a, "optimize", "--mode", "id" }).code == 0);
  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", b, "optimize", "--mode", "id" }).code == 0);
  for (const char *f : { "id_trace.csv", "id_params.csv", "id_polygons.txt", "id_mask.txt", "id_summary.csv" }) {
    CAPTURE(f);
    CHECK(fs::exists(ws / "a" / f));
    CHECK(slurp(ws / "a" / f) == slurp(ws / "b" / f));
  }
  CHECK(slurp(ws / "a" / "id_trace.csv").find("iter,ideal_loss_db,predicted_loss_db,grad_norm,step,em_solves")
        != std::string::npos);
  // a different seed moves the start
  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", b, "--seed", "6", "optimize", "--mode", "id" }).code == 0);
  CHECK(slurp(ws / "a" / "id_params.csv") != slurp(ws / "b" / "id_params.csv"));

  const double predicted_db = std::stod(last_row(slurp(ws / "a" / "id_summary.csv"))[2]);
  const double ideal_db = std::stod(last_row(slurp(ws / "a" / "id_summary.csv"))[1]);

  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", a, "predict", "--mask", (ws / "a" / "id_mask.txt").string(),
                "--contour", (ws / "a" / "contour.txt").string() })
              .code == 0);
  CHECK(fs::exists(ws / "a" / "contour.txt"));
  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", a, "evaluate", "--density",
                (ws / "a" / "predicted.txt").string() })
              .code == 0);
  const double via_files = std::stod(last_row(slurp(ws / "a" / "evaluate_summary.csv"))[2]);
  CHECK(std::abs(via_files - predicted_db) < 1e-9);

  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", a, "evaluate", "--params",
                (ws / "a" / "id_params.csv").string(), "--litho", "ideal" })
              .code == 0);
  CHECK(std::abs(std::stod(last_row(slurp(ws / "a" / "evaluate_summary.csv"))[2]) - ideal_db) < 1e-9);
  CHECK(ideal_db != predicted_db);
}

TEST_CASE("identity predict is a no-op and DUV erases an isolated tooth") {
  Workspace ws("predict");
  DensityGrid mask = DensityGrid::zeros({ 40, 40, 0.02, 0.0, 0.0 });
  mask.at(20, 20) = 1.0;
  save_density_grid(ws / "tooth.txt", mask);
  const fs::path ident = ws.config("device.kind = straight\ngrid.dx_nm = 20\nwavelengths.list_um = 1.32\n"
                                   "litho.model = identity\n",
                                   "ident.cfg");
  REQUIRE(cli({ "--config", ident.string(), "predict", "--mask", (ws / "tooth.txt").string(), "--output",
                (ws / "same.txt").string() })
              .code == 0);
  CHECK(slurp(ws / "same.txt") == slurp(ws / "tooth.txt"));

  const fs::path duv = ws.config(kStraight, "duv.cfg");
  REQUIRE(cli({ "--config", duv.string(), "predict", "--mask", (ws / "tooth.txt").string(), "--output",
                (ws / "gone.txt").string() })
              .code == 0);
  CHECK(load_density_grid(ws / "gone.txt").values.maxCoeff() < 0.05);
}

TEST_CASE("evaluate: sweep rows, litho choice and field dumps") {
  Workspace ws("evaluate");
  const fs::path cfg = ws.config(R"(device.kind = straight
grid.dx_nm = 20
wavelengths.sweep_start_um = 1.305
wavelengths.sweep_stop_um = 1.325
wavelengths.sweep_step_nm = 5
litho.model = gaussian
litho.preset = duv
)");
  const auto out = (ws / "out").string();
  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", out, "evaluate", "--litho", "ideal", "--dump-fields" }).code
          == 0);
  const std::string csv = slurp(ws / "out" / "evaluate.csv");
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == "wavelength_um,transmission,loss_db");
  CHECK(rows[1].rfind("1.305,", 0) == 0);
  CHECK(rows[5].rfind("1.325,", 0) == 0);
  const double loss = std::stod(last_row(slurp(ws / "out" / "evaluate_summary.csv"))[2]);
  CHECK(loss < 0.05);
  CHECK(fs::exists(ws / "out" / "field_1.3050um.txt"));
  CHECK(fs::exists(ws / "out" / "field_1.3250um.txt"));

  REQUIRE(cli({ "--config", cfg.string(), "--out-dir", out, "evaluate", "--litho", "model" }).code == 0);
  CHECK(std::stod(last_row(slurp(ws / "out" / "evaluate_summary.csv"))[2]) != loss);
}

TEST_CASE("compare writes the four-column report") {
  Workspace ws("compare");
  const fs::path cfg = ws.config(kStraight);
  const auto out = (ws / "out").string();
  const Run r = cli({ "--config", cfg.string(), "--out-dir", out, "compare" });
  REQUIRE(r.code == 0);
  const std::string report = slurp(ws / "out" / "report.csv");
  CHECK(report.rfind("# config_fingerprint=", 0) == 0);
  CHECK(report.find("id_ideal_db,id_predicted_db,faid_predicted_db,faid_ideal_db\n") != std::string::npos);
  const auto cells = last_row(report);
  REQUIRE(cells.size() == 4);
  for (const auto &c : cells) {
    std::size_t used = 0;
    std::stod(c, &used);
    CHECK(used == c.size());
  }
  for (const char *f : { "id_trace.csv", "faid_trace.csv", "id_polygons.txt", "faid_polygons.txt" })
    CHECK(fs::exists(ws / "out" / f));
  CHECK(std::stod(cells[2]) <= std::stod(cells[1]) + 1e-12);
}
