#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "talon/complexity.hpp"
#include "talon/rng.hpp"
#include "talon/series.hpp"

using namespace talon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("talon_series_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

}  // namespace

TEST_CASE("load_csv parses rows and channel names") {
    TempDir tmp;
    write_file(tmp.file("a.csv"),
               "date,HUFL,HULL\n"
               "2016-07-01 00:00:00,5.827,2.009\n"
               "2016-07-01 01:00:00,5.693,2.076\n"
               "2016-07-01 02:00:00,5.157,1.741\n");
    MultivariateSeries s = load_csv(tmp.file("a.csv"));
    CHECK(s.length() == 3);
    CHECK(s.channels() == 2);
    CHECK(s.channel_names[0] == "HUFL");
    CHECK(s.channel_names[1] == "HULL");
    CHECK(s.at(1, 0) == doctest::Approx(5.693));
    CHECK(s.timestamps[2] == "2016-07-01 02:00:00");
}

TEST_CASE("load_csv error surfaces") {
    TempDir tmp;
    write_file(tmp.file("empty.csv"), "date,v\n");
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("empty.csv")), doctest::Contains("no rows"),
                         std::runtime_error);

    write_file(tmp.file("missing.csv"), "time,v\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("missing.csv")), doctest::Contains("missing column"),
                         std::runtime_error);

    write_file(tmp.file("cell.csv"), "date,v\n1,abc\n");
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("cell.csv")), doctest::Contains("unparseable"),
                         std::runtime_error);

    write_file(tmp.file("mono.csv"), "date,v\n2,1\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(tmp.file("mono.csv")),
                         doctest::Contains("strictly increasing"), std::runtime_error);
}

TEST_CASE("ETTh1-shaped csv: 17420 rows, 7 channels") {
    TempDir tmp;
    std::ofstream out(tmp.file("etth1.csv"));
    out << "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n";
    Rng rng(1, "etth1");
    for (int t = 0; t < 17420; ++t) {
        out << 100000 + t;
        for (int c = 0; c < 7; ++c) out << ',' << rng.uniform(-1, 1);
        out << '\n';
    }
    out.close();
    MultivariateSeries s = load_csv(tmp.file("etth1.csv"));
    CHECK(s.length() == 17420);
    CHECK(s.channels() == 7);

    auto splits = chronological_split(s, 8545, 2881, 2881);
    CHECK(splits[0].length() == 8545);
    CHECK(splits[1].length() == 2881);
    CHECK(splits[2].length() == 2881);

    // no leakage: strictly ordered boundaries
    CHECK(splits[0].timestamps.back() < splits[1].timestamps.front());
    CHECK(splits[1].timestamps.back() < splits[2].timestamps.front());

    // evaluation window arithmetic on the test split (L=672, H=96)
    auto windows = make_windows(splits[2], 672, 96, 1);
    CHECK(windows.size() == (2881 - 672 - 96 + 1) * 7);
}

TEST_CASE("chronological_split edge cases") {
    MultivariateSeries s;
    s.channel_names = {"v"};
    for (int t = 0; t < 3; ++t) {
        s.timestamps.push_back(std::to_string(t));
        s.values.push_back({double(t)});
    }
    auto splits = chronological_split(s, 1, 1, 1);
    CHECK(splits[0].length() == 1);
    CHECK(splits[2].values[0][0] == 2.0);
    CHECK_THROWS_AS(chronological_split(s, 2, 1, 1), std::invalid_argument);
}

TEST_CASE("make_windows counting") {
    MultivariateSeries s;
    s.channel_names = {"v"};
    for (int t = 0; t < 10; ++t) {
        s.timestamps.push_back(std::to_string(t));
        s.values.push_back({double(t)});
    }
    auto w = make_windows(s, 4, 2, 1);
    CHECK(w.size() == 5);
    CHECK(w[0].lookback == std::vector<double>{0, 1, 2, 3});
    CHECK(w[0].target == std::vector<double>{4, 5});
    CHECK(w[4].start == 4);

    CHECK(make_windows(s, 8, 2, 1).size() == 1);  // T == L+H
    CHECK_THROWS_AS(make_windows(s, 9, 2, 1), std::invalid_argument);
}

TEST_CASE("window of 768 rows with L=672 segments into 7 patches") {
    MultivariateSeries s;
    s.channel_names = {"v"};
    for (int t = 0; t < 768; ++t) {
        s.timestamps.push_back(std::to_string(t));
        s.values.push_back({std::sin(0.01 * t)});
    }
    auto w = make_windows(s, 672, 96, 1);
    CHECK(w.size() == 1);
    auto patches = segment(w[0].lookback, 96);
    CHECK(patches.size() == 7);

    auto metas = patch_metadata(s, w[0], 96);
    CHECK(metas.size() == 7);
    CHECK(metas[0].index == 1);
    CHECK(metas[0].token_len == 96);
    CHECK(metas[0].seq_len == 672);
    CHECK(metas[0].patch_start == "0");
    CHECK(metas[0].patch_end == "95");
    CHECK(metas[6].patch_end == "671");
    CHECK(metas[0].x_end == "671");
}

TEST_CASE("segment bijection and errors") {
    std::vector<double> lb = {1.5, -2, 3, 0.25, 9, -7};
    auto patches = segment(lb, 3);
    CHECK(patches.size() == 2);
    std::vector<double> joined;
    for (const auto& p : patches) joined.insert(joined.end(), p.begin(), p.end());
    CHECK(joined == lb);  // bit-exact

    CHECK(segment(lb, 6).size() == 1);
    CHECK(segment(lb, 6)[0] == lb);
    CHECK_THROWS_AS(segment({1, 2, 3, 4, 5, 6, 7}, 5), std::invalid_argument);
}

TEST_CASE("standardize and destandardize") {
    NormStats st = lookback_stats({0.0, 2.0});
    CHECK(st.mean == doctest::Approx(1.0));
    CHECK(st.std == doctest::Approx(1.0));  // population convention
    auto norm = standardize({0.0, 2.0}, st);
    CHECK(norm[0] == doctest::Approx(-1.0));
    CHECK(norm[1] == doctest::Approx(1.0));

    // constant window clamps and round-trips
    NormStats st7 = lookback_stats(std::vector<double>(8, 7.0));
    auto z = standardize(std::vector<double>(8, 7.0), st7);
    for (double v : z) CHECK(v == doctest::Approx(0.0));
    auto back = destandardize(z, st7);
    for (double v : back) CHECK(v == doctest::Approx(7.0).epsilon(1e-9));

    // round trip on a random window
    Rng rng(3, "std");
    std::vector<double> x(32);
    for (auto& v : x) v = rng.uniform(-10, 10);
    NormStats sx = lookback_stats(x);
    auto normx = standardize(x, sx);
    double m = 0, var = 0;
    for (double v : normx) m += v;
    m /= double(normx.size());
    for (double v : normx) var += (v - m) * (v - m);
    var /= double(normx.size());
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-5);
    auto rt = destandardize(normx, sx);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(rt[i] - x[i]) < 1e-5);

    // scale/shift equivariance: standardize(a*x + b) == standardize(x)
    std::vector<double> ax(x);
    for (auto& v : ax) v = 3.5 * v - 11.0;
    auto norm_ax = standardize(ax, lookback_stats(ax));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(norm_ax[i] - normx[i]) < 1e-5);
}

TEST_CASE("synthetic generation") {
    SynthSpec spec;
    spec.length = 100;
    spec.channels = 1;
    RegimeSpec trend;
    trend.name = "t";
    trend.kind = "linear-trend";
    trend.slope = 0.5;
    spec.regimes.push_back(trend);

    SynthResult a = synth_generate(spec, 7);
    CHECK(a.series.length() == 100);
    for (std::size_t t = 1; t < 100; ++t)
        CHECK(a.series.at(t, 0) > a.series.at(t - 1, 0));  // strictly monotone

    SynthResult b = synth_generate(spec, 7);
    CHECK(a.series.values == b.series.values);  // determinism

    RegimeSpec bad;
    bad.name = "x";
    bad.kind = "wavelet";
    SynthSpec badspec = spec;
    badspec.regimes = {bad};
    CHECK_THROWS_AS(synth_generate(badspec, 7), std::invalid_argument);
}

TEST_CASE("ar1 regime has strong lag-1 autocorrelation") {
    SynthSpec spec;
    spec.length = 1000;
    RegimeSpec ar;
    ar.name = "ar";
    ar.kind = "ar1";
    ar.rho = 0.95;
    spec.regimes.push_back(ar);
    SynthResult r = synth_generate(spec, 42);
    std::vector<double> ch(1000);
    for (std::size_t t = 0; t < 1000; ++t) ch[t] = r.series.at(t, 0);
    CHECK(autocorr1(ch) > 0.8);  // complexity module as oracle
}

TEST_CASE("synth spec parsing and labels sidecar") {
    TempDir tmp;
    write_file(tmp.file("spec.txt"),
               "# demo corpus\n"
               "length=60\n"
               "channels=2\n"
               "regimes=up,flat\n"
               "regime.up.kind=linear-trend\n"
               "regime.up.slope=1.0\n"
               "regime.up.length=20\n"
               "regime.flat.kind=white-noise\n"
               "regime.flat.scale=0.5\n");
    SynthSpec spec = parse_synth_spec_file(tmp.file("spec.txt"));
    CHECK(spec.length == 60);
    CHECK(spec.channels == 2);
    CHECK(spec.regimes.size() == 2);
    CHECK(spec.regimes[0].length == 20);

    SynthResult r = synth_generate(spec, 5);
    CHECK(r.regime_labels.size() == 60);
    CHECK(r.regime_labels[0] == "up");
    CHECK(r.regime_labels[59] == "flat");

    write_regime_labels(r, tmp.file("labels.csv"));
    auto labels = load_regime_labels(tmp.file("labels.csv"));
    CHECK(labels == r.regime_labels);

    write_csv(r.series, tmp.file("out.csv"));
    MultivariateSeries round = load_csv(tmp.file("out.csv"));
    CHECK(round.length() == 60);
    CHECK(round.channels() == 2);
}
