#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "pos2fs/stream_data.hpp"
#include "support/oracles.hpp"

using namespace pos2fs;

namespace {

std::string write_file(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream(path) << body;
    return path.string();
}

Dataset random_dataset(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform();
    std::vector<int> labels(rows);
    for (std::size_t i = 0; i < rows; ++i) labels[i] = static_cast<int>(i % 2);
    return Dataset::dense(std::move(v), std::move(labels));
}

} // namespace

TEST(LoadCsv, ThreeRowsTwoFeatures) {
    const auto dir = oracle::temp_dir("csv_small");
    const auto path = write_file(dir, "a.csv", "x,y,label\n1,10,0\n2,20,1\n3,40,0\n");
    const Dataset d = load_csv(path, std::string("label"));
    EXPECT_EQ(d.rows(), 3u);
    EXPECT_EQ(d.features(), 2u);
    EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
    EXPECT_DOUBLE_EQ(d.values(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(d.values(1, 1), 1.0 / 3.0);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"x", "y"}));
}

TEST(LoadCsv, SingleClassRejected) {
    const auto dir = oracle::temp_dir("csv_one_class");
    const auto path = write_file(dir, "a.csv", "x,label\n1,1\n2,1\n3,1\n");
    EXPECT_THROW(load_csv(path, std::string("label")), ValidationError);
}

TEST(LoadCsv, UspsShapedInput) {
    const auto dir = oracle::temp_dir("csv_usps");
    std::ofstream out(dir / "usps.csv");
    for (int c = 0; c < 242; ++c) out << "f" << c << ',';
    out << "label\n";
    Rng rng(5);
    for (int r = 0; r < 1500; ++r) {
        for (int c = 0; c < 242; ++c) out << rng.uniform() << ',';
        out << r % 2 << '\n';
    }
    out.close();
    const Dataset d = load_csv((dir / "usps.csv").string(), std::string("label"));
    EXPECT_EQ(d.rows(), 1500u);
    EXPECT_EQ(d.features(), 242u);
}

TEST(LoadCsv, MissingCellsAndLabelByIndex) {
    const auto dir = oracle::temp_dir("csv_missing");
    const auto path = write_file(dir, "a.csv", "cls,x,y\nb,1,NA\na,,2\nb,3,4\n");
    const Dataset d = load_csv(path, std::size_t{0});
    EXPECT_EQ(d.labels, (std::vector<int>{1, 0, 1}));
    EXPECT_FALSE(d.observed(0, 1));
    EXPECT_FALSE(d.observed(1, 0));
    EXPECT_EQ(d.observed_count(), 4u);
    EXPECT_DOUBLE_EQ(d.values(0, 1), 0.0);
}

TEST(LoadCsv, MalformedRowsReportRowNumber) {
    const auto dir = oracle::temp_dir("csv_bad");
    const auto ragged = write_file(dir, "r.csv", "x,label\n1,0\n2\n");
    const auto text = write_file(dir, "t.csv", "x,label\n1,0\nabc,1\n");
    try {
        load_csv(ragged, std::string("label"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    }
    EXPECT_THROW(load_csv(text, std::string("label")), ParseError);
    EXPECT_THROW(load_csv((dir / "none.csv").string(), std::string("label")), ParseError);
    EXPECT_THROW(load_csv(text, std::string("nope")), ParseError);
}

TEST(LoadCsv, WriteReadRoundTrip) {
    const auto dir = oracle::temp_dir("csv_roundtrip");
    Dataset d = apply_mask(random_dataset(20, 4, 1), {0.3, 2});
    normalize_minmax(d);
    write_csv((dir / "d.csv").string(), d);
    const Dataset back = load_csv((dir / "d.csv").string(), std::string("label"));
    EXPECT_TRUE((back.observed == d.observed).all());
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_LT((back.values - d.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, ObservedEntriesSpanUnitInterval) {
    Dataset d = apply_mask(random_dataset(30, 5, 3), {0.4, 9});
    d.values *= 7.0;
    normalize_minmax(d);
    for (Eigen::Index c = 0; c < 5; ++c) {
        double lo = 1e9, hi = -1e9;
        for (Eigen::Index r = 0; r < 30; ++r)
            if (d.observed(r, c)) {
                lo = std::min(lo, d.values(r, c));
                hi = std::max(hi, d.values(r, c));
            } else {
                EXPECT_EQ(d.values(r, c), 0.0);
            }
        EXPECT_DOUBLE_EQ(lo, 0.0);
        EXPECT_DOUBLE_EQ(hi, 1.0);
    }
}

TEST(ApplyMask, ZeroRateIsIdentity) {
    const Dataset d = random_dataset(10, 6, 1);
    const Dataset m = apply_mask(d, {0.0, 42});
    EXPECT_EQ(m.observed_count(), d.observed_count());
    EXPECT_EQ(m.values, d.values);
}

TEST(ApplyMask, HalfRateWithinBinomialBounds) {
    // 10000 entries, p = 0.5: sd = 50, so 3 sd = [4850, 5150] inside [4700, 5300].
    const Dataset d = random_dataset(100, 100, 2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset m = apply_mask(d, {0.5, seed});
        const std::size_t masked = 10000 - m.observed_count();
        EXPECT_GE(masked, 4700u);
        EXPECT_LE(masked, 5300u);
    }
}

TEST(ApplyMask, Deterministic) {
    const Dataset d = random_dataset(40, 8, 3);
    const Dataset a = apply_mask(d, {0.5, 11});
    const Dataset b = apply_mask(d, {0.5, 11});
    const Dataset c = apply_mask(d, {0.5, 12});
    EXPECT_TRUE((a.observed == b.observed).all());
    EXPECT_FALSE((a.observed == c.observed).all());
}

TEST(ApplyMask, EveryColumnKeepsAnEntry) {
    const Dataset d = random_dataset(4, 50, 4);
    const Dataset m = apply_mask(d, {0.99, 5});
    for (Eigen::Index c = 0; c < 50; ++c) EXPECT_TRUE(m.observed.col(c).any());
    for (Eigen::Index i = 0; i < m.values.size(); ++i)
        if (!m.observed.data()[i]) {
            EXPECT_EQ(m.values.data()[i], 0.0);
        }
    EXPECT_THROW(apply_mask(d, {1.0, 5}), ValidationError);
    EXPECT_THROW(apply_mask(d, {-0.1, 5}), ValidationError);
}

TEST(MakeStream, WidthsPartitionFeatures) {
    const auto blocks = make_stream(random_dataset(6, 10, 1), 4);
    ASSERT_EQ(blocks.size(), 3u);
    EXPECT_EQ(blocks[0].width, 4u);
    EXPECT_EQ(blocks[1].width, 4u);
    EXPECT_EQ(blocks[2].width, 2u);
    EXPECT_EQ(blocks[2].feature_ids, (std::vector<std::size_t>{8, 9}));
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(blocks[t].step, t);
}

TEST(MakeStream, FullWidthIsSingleBlock) {
    const auto blocks = make_stream(random_dataset(6, 10, 1), 10);
    ASSERT_EQ(blocks.size(), 1u);
    EXPECT_EQ(blocks[0].width, 10u);
    EXPECT_THROW(make_stream(random_dataset(6, 10, 1), 0), ValidationError);
}

TEST(MakeStream, EntriesMatchObservedCount) {
    const Dataset m = apply_mask(random_dataset(50, 23, 6), {0.6, 7});
    std::size_t oracle_count = 0;
    for (Eigen::Index c = 0; c < m.observed.cols(); ++c)
        for (Eigen::Index r = 0; r < m.observed.rows(); ++r) oracle_count += m.observed(r, c) ? 1 : 0;
    for (const bool shuffle : {false, true}) {
        const auto blocks = make_stream(m, 5, {shuffle, 3});
        std::size_t total = 0;
        std::vector<std::size_t> ids;
        for (const auto& b : blocks) {
            total += b.entries.size();
            ids.insert(ids.end(), b.feature_ids.begin(), b.feature_ids.end());
            for (const auto& e : b.entries)
                EXPECT_EQ(e.value, m.values(e.row, static_cast<Eigen::Index>(b.feature_ids[e.col])));
        }
        EXPECT_EQ(total, oracle_count);
        std::sort(ids.begin(), ids.end());
        std::vector<std::size_t> expect(23);
        std::iota(expect.begin(), expect.end(), std::size_t{0});
        EXPECT_EQ(ids, expect);
    }
}

TEST(ZeroFill, MissingEntriesBecomeZero) {
    const Dataset m = apply_mask(random_dataset(10, 3, 6), {0.5, 1});
    const auto blocks = make_stream(m, 3);
    const CompletedBlock c = zero_fill(blocks[0]);
    EXPECT_EQ(c.values, m.values);
    EXPECT_TRUE((c.observed == m.observed).all());
    EXPECT_EQ(c.provenance(0, 0), m.observed(0, 0) ? Provenance::Observed : Provenance::Imputed);
}

TEST(Synthetic, ShapeAndGroundTruth) {
    SyntheticSpec spec;
    spec.instances = 300;
    spec.informative = 5;
    spec.noise = 15;
    spec.seed = 1;
    const auto s = make_synthetic(spec);
    EXPECT_EQ(s.dataset.rows(), 300u);
    EXPECT_EQ(s.dataset.features(), 20u);
    EXPECT_EQ(s.informative, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(std::count(s.dataset.labels.begin(), s.dataset.labels.end(), 1), 150);
    const auto again = make_synthetic(spec);
    EXPECT_EQ(again.dataset.values, s.dataset.values);
    EXPECT_EQ(again.dataset.labels, s.dataset.labels);
}

TEST(Synthetic, InformativeColumnsCorrelateWithLabels) {
    SyntheticSpec spec;
    spec.redundant = 4;
    spec.seed = 8;
    const auto s = make_synthetic(spec);
    std::vector<double> y(s.dataset.labels.begin(), s.dataset.labels.end());
    auto column = [&](std::size_t c) {
        std::vector<double> v(s.dataset.rows());
        for (std::size_t r = 0; r < v.size(); ++r) v[r] = s.dataset.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        return v;
    };
    double weakest_informative = 1.0, strongest_noise = 0.0;
    for (std::size_t c = 0; c < 5; ++c)
        weakest_informative = std::min(weakest_informative, std::abs(oracle::pearson(column(c), y)));
    for (std::size_t c = 9; c < s.dataset.features(); ++c)
        strongest_noise = std::max(strongest_noise, std::abs(oracle::pearson(column(c), y)));
    EXPECT_GT(weakest_informative, strongest_noise);
}
