// End-to-end checks of the stoprec binary: exit codes, file outputs, JSON
// shapes, determinism of the repro pipeline, config validation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "stoprec/sparse.hpp"
#include "stoprec/tuner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int failures = 0;

#define CHECK_MSG(cond, msg)                                              \
    do {                                                                  \
        if (!(cond)) {                                                    \
            std::fprintf(stderr, "[FAIL] %s:%d %s\n", __FILE__, __LINE__, \
                         static_cast<const char*>(msg));                  \
            ++failures;                                                   \
        }                                                                 \
    } while (0)

const std::string kBin = STOPREC_BIN;

fs::path work() {
    const fs::path p = fs::temp_directory_path() / "stoprec_cli_tests";
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, std::string* stdout_text = nullptr) {
    const fs::path out = work() / "stdout.txt";
    const std::string cmd = kBin + " " + args + " > " + out.string() + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    if (stdout_text) {
        std::ifstream in(out);
        std::stringstream ss;
        ss << in.rdbuf();
        *stdout_text = ss.str();
    }
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main() {
    const fs::path w = work();

    // gen writes a 225x225 Matrix Market file
    {
        const fs::path mtx = w / "lap16.mtx";
        CHECK_MSG(run("gen --family laplacian2d --g 16 --out " + mtx.string()) == 0,
                  "gen exits 0");
        const stoprec::SparseMatrix A = stoprec::read_matrix_market(mtx.string());
        CHECK_MSG(A.nrows == 225 && A.ncols == 225, "gen produced 225x225");
    }

    // unknown flag: nonzero exit
    CHECK_MSG(run("gen --bogus 1 --out x.mtx") != 0, "unknown flag rejected");
    CHECK_MSG(run("frobnicate") != 0, "unknown subcommand rejected");

    // precond emits a JSON build report and a preconditioner file
    {
        std::string out;
        const int rc = run("precond --matrix " + (w / "lap16.mtx").string() +
                               " --alpha 4 --eps 0.125 --delta 0.125 --seed 42 --out " +
                               (w / "p.mtx").string(),
                           &out);
        CHECK_MSG(rc == 0, "precond exits 0");
        const json j = json::parse(out);
        CHECK_MSG(j.at("chains_per_row") == 30, "chains per row matches the formula");
        CHECK_MSG(j.at("spectral_bound").get<double>() == 0.2, "||T||_inf = 0.2 at alpha 4");
        CHECK_MSG(fs::exists(w / "p.mtx"), "preconditioner file written");
    }

    // solve prints one-line JSON; preconditioner accepted
    {
        std::string out;
        CHECK_MSG(run("solve --matrix " + (w / "lap16.mtx").string() +
                          " --solver gmres --tol 1e-8",
                      &out) == 0,
                  "solve exits 0");
        const json j = json::parse(out);
        CHECK_MSG(j.at("converged") == true, "solve converged");
        CHECK_MSG(j.at("iterations").get<int>() > 0, "iterations recorded");
        CHECK_MSG(j.at("final_rel_residual").get<double>() <= 1e-8, "residual at tolerance");

        std::string out2;
        CHECK_MSG(run("solve --matrix " + (w / "lap16.mtx").string() + " --precond " +
                          (w / "p.mtx").string() + " --solver gmres",
                      &out2) == 0,
                  "preconditioned solve exits 0");
        CHECK_MSG(json::parse(out2).at("converged") == true, "preconditioned solve converged");
    }

    // grid writes a dataset with the documented shape
    {
        const fs::path ds = w / "grid.jsonl";
        CHECK_MSG(run("grid --matrix " + (w / "lap16.mtx").string() +
                          " --alphas 1,2 --epsilons 0.5,0.25 --deltas 0.5 --replicates 2 "
                          "--seed 3 --out " +
                          ds.string()) == 0,
                  "grid exits 0");
        const auto samples = stoprec::read_jsonl(ds.string());
        CHECK_MSG(samples.size() == 4, "2x2x1 grid gives 4 samples");
        CHECK_MSG(samples[0].replicate_ys.size() == 2, "2 replicates per sample");
        CHECK_MSG(samples[0].strategy == "grid", "strategy recorded");
    }

    // train -> checkpoint -> propose round trip
    {
        const fs::path ds = w / "train.jsonl";
        CHECK_MSG(run("grid --matrix " + (w / "lap16.mtx").string() +
                          " --replicates 2 --seed 5 --divergence-alphas 0.05 --out " +
                          ds.string()) == 0,
                  "full default grid exits 0");
        const auto samples = stoprec::read_jsonl(ds.string());
        CHECK_MSG(samples.size() == 65, "64 grid + 1 divergence sample");

        const fs::path ckpt = w / "model.ckpt";
        CHECK_MSG(run("train --data " + ds.string() + " --out " + ckpt.string() +
                      " --epochs 12 --batch 16 --seed 9") == 0,
                  "train exits 0");
        CHECK_MSG(fs::exists(ckpt), "checkpoint written");

        std::string out;
        CHECK_MSG(run("propose --model " + ckpt.string() + " --matrix " +
                          (w / "lap16.mtx").string() + " --k 4 --xi 0.05 --data " + ds.string(),
                      &out) == 0,
                  "propose exits 0");
        int lines = 0;
        std::stringstream ss(out);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            CHECK_MSG(j.at("alpha").get<double>() >= 0.05, "proposal alpha in bounds");
            CHECK_MSG(j.at("eps").get<double>() <= 1.0, "proposal eps in bounds");
            ++lines;
        }
        CHECK_MSG(lines == 4, "k=4 proposals printed");
    }

    // report coverage/inclusion/compare from the dataset + model
    {
        const fs::path rep = w / "reports";
        CHECK_MSG(run("report coverage --data " + (w / "train.jsonl").string() + " --model " +
                      (w / "model.ckpt").string() + " --out " + rep.string()) == 0,
                  "report coverage exits 0");
        CHECK_MSG(fs::exists(rep / "coverage.csv"), "coverage.csv written");
        CHECK_MSG(run("report inclusion --data " + (w / "train.jsonl").string() + " --model " +
                      (w / "model.ckpt").string() + " --out " + rep.string()) == 0,
                  "report inclusion exits 0");
        CHECK_MSG(fs::exists(rep / "inclusion.csv"), "inclusion.csv written");
        CHECK_MSG(run("report compare --data " + (w / "train.jsonl").string() + " --out " +
                      rep.string()) == 0,
                  "report compare exits 0");
        CHECK_MSG(fs::exists(rep / "compare.csv") && fs::exists(rep / "compare.json"),
                  "compare tables written");
        const std::string cov = slurp(rep / "coverage.csv");
        CHECK_MSG(cov.rfind("tau,expected,observed,wilson_lo,wilson_hi,n", 0) == 0,
                  "coverage header documented");
    }

    // tune: config validation catches every violation at once
    {
        const fs::path bad = w / "bad.toml";
        std::ofstream(bad) << "[solver]\ntype = \"sor\"\n[run]\nseed = -1\nbogus = 2\n";
        CHECK_MSG(run("tune --config " + bad.string()) == 2, "invalid config exits 2");
    }

    // tune: a valid config drives the loop end to end (tiny scale)
    {
        const fs::path adv = w / "adv8.mtx";
        CHECK_MSG(run("gen --family advdiff2d --g 8 --peclet 10 --out " + adv.string()) == 0,
                  "gen advdiff exits 0");
        const fs::path lap8 = w / "lap8.mtx";
        CHECK_MSG(run("gen --family laplacian2d --g 8 --out " + lap8.string()) == 0,
                  "gen lap8 exits 0");
        const fs::path cfg = w / "tune.toml";
        std::ofstream(cfg) << "[run]\nout_dir = \"" << (w / "tune_out").string()
                           << "\"\nseed = 7\n[matrices]\ntrain = [\"" << lap8.string()
                           << "\", \"" << (w / "lap16.mtx").string() << "\"]\ntune = [\""
                           << adv.string()
                           << "\"]\n[grid]\nalphas = [1.0, 4.0]\nepsilons = [0.5, 0.125]\n"
                              "deltas = [0.5, 0.125]\ndivergence_alphas = [0.05]\n"
                              "[evaluate]\nreplicates = 3\n[surrogate]\nmax_epochs = 15\n"
                              "batch_size = 16\ngraph_hidden = 32\ncombined_hidden = 32\n"
                              "[bo]\nbudget = 4\nbatch = 4\nxi = [0.05]\nrestarts = 4\n"
                              "random_points = 4\n";
        CHECK_MSG(run("tune --config " + cfg.string()) == 0, "tune exits 0");
        CHECK_MSG(fs::exists(w / "tune_out" / "summary.json"), "tune wrote summary.json");
        CHECK_MSG(fs::exists(w / "tune_out" / "dataset_bo_xi0.05.jsonl"), "tune wrote BO dataset");
    }

    // repro determinism: identical artifacts for the same seed
    {
        const fs::path r1 = w / "repro1";
        const fs::path r2 = w / "repro2";
        fs::remove_all(r1);
        fs::remove_all(r2);
        CHECK_MSG(run("repro --out " + r1.string() + " --seed 42 --smoke") == 0, "repro 1 ok");
        CHECK_MSG(run("repro --out " + r2.string() + " --seed 42 --smoke --threads 4") == 0,
                  "repro 2 ok");
        std::size_t compared = 0;
        for (const auto& e : fs::recursive_directory_iterator(r1)) {
            if (!e.is_regular_file()) continue;
            const fs::path rel = fs::relative(e.path(), r1);
            CHECK_MSG(slurp(e.path()) == slurp(r2 / rel), "repro artifact byte-identical");
            ++compared;
        }
        CHECK_MSG(compared >= 10, "repro produced the expected artifact set");
    }

    if (failures == 0) std::printf("stoprec cli tests: all passed\n");
    return failures == 0 ? 0 : 1;
}
