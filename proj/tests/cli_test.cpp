#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "test_support.hpp"

using namespace s3vaada;
using namespace s3vaada::testing;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult cli(const TempDir& dir, const std::string& args) {
    const auto out = dir.path() / "stdout.txt";
    const auto err = dir.path() / "stderr.txt";
    const std::string cmd = std::string(S3VAADA_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

ExternalScoreFile score_file(std::size_t rows, bool embed, bool disc, Rng& rng) {
    ExternalScoreFile f;
    f.classes = 3;
    f.restarts = 2;
    f.embedding_dim = embed ? 4 : 0;
    f.has_disc = disc;
    for (std::size_t i = 0; i < rows; ++i) {
        const PerturbationBundle b = random_bundle(3, 2, rng);
        ScoreRow r{static_cast<long long>(500 + i), b.original, b.perturbed, std::nullopt, std::nullopt};
        if (embed) r.embedding = random_vector(4, rng);
        if (disc) r.disc = rng.uniform(0.05, 0.95);
        f.rows.push_back(std::move(r));
    }
    return f;
}

const char* kSmallConfig = R"({
  "cycles": 1, "budget_fraction": 0.05,
  "train": {"epochs": 2},
  "model": {"hidden": 8, "embedding": 4, "disc_hidden": 8},
  "vat": {"restarts": 2},
  "data": {"n_per_domain": 60, "n_test": 40}
})";

}  // namespace

TEST(Cli, GradcheckPassesAndReportsFaults) {
    TempDir dir;
    const CliResult ok = cli(dir, "gradcheck --seed 3");
    EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
    EXPECT_NE(ok.out.find("total"), std::string::npos);
    const CliResult bad = cli(dir, "gradcheck --inject-fault vat_unlabeled");
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
    EXPECT_EQ(cli(dir, "gradcheck --dims 2,4").code, 1);
}

TEST(Cli, SelectMatchesLibraryGreedy) {
    TempDir dir;
    Rng rng(31);
    const ExternalScoreFile f = score_file(20, false, false, rng);
    write_external_scores(dir.path() / "s.csv", f);
    const CliResult ok = cli(dir, "select " + (dir.path() / "s.csv").string() + " --budget 4 --alpha 0.4 --beta 0.4 --out " +
                                      (dir.path() / "sel.json").string());
    ASSERT_EQ(ok.code, 0) << ok.err;
    const auto j = nlohmann::json::parse(slurp(dir.path() / "sel.json"));
    std::vector<PerturbationBundle> bundles;
    for (const auto& row : f.rows) bundles.push_back({row.original, row.perturbed, 0});
    const Selection expected = greedy_select(CandidatePool::from_bundles(bundles), 4, {0.4, 0.4});
    std::vector<long long> ids;
    for (std::size_t i : expected.indices) ids.push_back(500 + static_cast<long long>(i));
    EXPECT_EQ(j.at("ids").get<std::vector<long long>>(), ids);
    EXPECT_EQ(j.at("manifest").at("alpha").get<double>(), 0.4);
    EXPECT_EQ(j.at("manifest").at("beta").get<double>(), 0.4);
    EXPECT_EQ(j.at("manifest").at("inputs_hash"), git_blob_hash(slurp(dir.path() / "s.csv")));
}

TEST(Cli, SelectValidatesInputs) {
    TempDir dir;
    Rng rng(32);
    write_external_scores(dir.path() / "s.csv", score_file(5, false, false, rng));
    const std::string s = (dir.path() / "s.csv").string();
    const CliResult over = cli(dir, "select " + s + " --budget 6");
    EXPECT_EQ(over.code, 1);
    EXPECT_NE(over.err.find("exceeds"), std::string::npos);
    EXPECT_EQ(cli(dir, "select " + s + " --budget 2 --sampler kcenter").code, 1);
    EXPECT_EQ(cli(dir, "select " + s + " --budget 2 --sampler aada").code, 1);
    EXPECT_EQ(cli(dir, "select " + s + " --budget 2 --alpha 0.9").code, 1);
    EXPECT_EQ(cli(dir, "select " + s + " --budget 2 --sampler margin").code, 0);

    write_external_scores(dir.path() / "full.csv", score_file(8, true, true, rng));
    for (const char* sampler : {"random", "entropy", "kcenter", "aada", "badge", "s3"}) {
        const CliResult r = cli(dir, "select " + (dir.path() / "full.csv").string() + " --budget 3 --sampler " + sampler);
        ASSERT_EQ(r.code, 0) << sampler << r.err;
        EXPECT_EQ(nlohmann::json::parse(r.out).at("ids").size(), 3u) << sampler;
    }
}

TEST(Cli, SelectDegenerateSettings) {
    TempDir dir;
    Rng rng(33);
    const ExternalScoreFile f = score_file(12, false, false, rng);
    write_external_scores(dir.path() / "s.csv", f);
    const std::string s = (dir.path() / "s.csv").string();

    const CliResult all = cli(dir, "select " + s + " --budget 12 --sampler random --seed 9");
    ASSERT_EQ(all.code, 0) << all.err;
    auto ids = nlohmann::json::parse(all.out).at("ids").get<std::vector<long long>>();
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(ids[i], 500 + static_cast<long long>(i));

    const CliResult kc = cli(dir, "select " + s + " --budget 5 --alpha 0 --beta 1");
    ASSERT_EQ(kc.code, 0) << kc.err;
    std::vector<PerturbationBundle> bundles;
    for (const auto& row : f.rows) bundles.push_back({row.original, row.perturbed, 0});
    const Matrix kl = CandidatePool::from_bundles(bundles).kl_table();
    // farthest-first on the KL table, first pick lowest id
    std::vector<long long> expected{500};
    std::vector<std::size_t> chosen{0};
    while (chosen.size() < 5) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < 12; ++i) {
            if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
            double d = 1e300;
            for (std::size_t c : chosen) d = std::min(d, kl(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)));
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        chosen.push_back(best);
        expected.push_back(500 + static_cast<long long>(best));
    }
    EXPECT_EQ(nlohmann::json::parse(kc.out).at("ids").get<std::vector<long long>>(), expected);

    const auto defaults = nlohmann::json::parse(cli(dir, "select " + s + " --budget 2").out).at("manifest");
    EXPECT_EQ(defaults.at("alpha").get<double>(), 0.5);
    EXPECT_EQ(defaults.at("beta").get<double>(), 0.3);
}

TEST(Cli, GradcheckIsRepeatable) {
    TempDir dir;
    EXPECT_EQ(cli(dir, "gradcheck --seed 5 --dims 3,5,4,2,3").out, cli(dir, "gradcheck --seed 5 --dims 3,5,4,2,3").out);
}

TEST(Cli, RunRejectsDuplicateSeeds) {
    TempDir dir;
    write_text_file(dir.path() / "cfg.json", kSmallConfig);
    EXPECT_EQ(cli(dir, "run " + (dir.path() / "cfg.json").string() + " --seeds 1,1").code, 1);
}

TEST(Cli, RunThenReport) {
    TempDir dir;
    write_text_file(dir.path() / "cfg.json", kSmallConfig);
    const CliResult r = cli(dir, "run " + (dir.path() / "cfg.json").string() + " --seeds 1,2 --sampler entropy --out " +
                                     (dir.path() / "runs").string());
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"seed_1/metrics.csv", "seed_2/manifest.json", "seed_2/selections.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "runs" / f)) << f;
    }
    const auto manifest = nlohmann::json::parse(slurp(dir.path() / "runs/seed_2/manifest.json"));
    EXPECT_EQ(manifest.at("seed").get<int>(), 2);
    EXPECT_EQ(manifest.at("config").at("sampler"), "entropy");

    const CliResult rep = cli(dir, "report " + (dir.path() / "runs/seed_1").string() + " " +
                                       (dir.path() / "runs/seed_2").string() + " --out " + (dir.path() / "rep").string());
    ASSERT_EQ(rep.code, 0) << rep.err;
    const auto rows = read_lines(dir.path() / "rep/summary.csv");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(split_csv_line(rows[1])[2], "2");
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "rep/plot_data.csv"));
    const std::string first = slurp(dir.path() / "rep/summary.csv");
    ASSERT_EQ(cli(dir, "report " + (dir.path() / "runs/seed_1").string() + " " + (dir.path() / "runs/seed_2").string() +
                           " --out " + (dir.path() / "rep").string())
                  .code,
              0);
    EXPECT_EQ(slurp(dir.path() / "rep/summary.csv"), first);

    const CliResult again = cli(dir, "run " + (dir.path() / "cfg.json").string() + " --seeds 1 --sampler entropy --out " +
                                         (dir.path() / "again").string());
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(slurp(dir.path() / "again/seed_1/metrics.csv"), slurp(dir.path() / "runs/seed_1/metrics.csv"));
}

TEST(Cli, ConfigErrorsExitWithValidationCode) {
    TempDir dir;
    write_text_file(dir.path() / "cfg.json", R"({"train": {"epochz": 3}})");
    const CliResult r = cli(dir, "run " + (dir.path() / "cfg.json").string() + " --out " + (dir.path() / "o").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("train.epochz"), std::string::npos) << r.err;
}
