#include <gtest/gtest.h>

#include <filesystem>

#include "gmwb/io.hpp"

using namespace gmwb;
using nlohmann::json;

TEST(Io, ParsesModelAndContract) {
    const auto m = io::parse_model(json::parse(R"({"v0":0.05,"kv":2,"thetav":0.05,"omegav":0.5,"rhov":-0.55,
        "r0":0.02,"kr":0.15,"omegar":0.015,"rhor":0.2,"alpha":0.035})"));
    EXPECT_EQ(m.params.kv, 2.0);
    EXPECT_EQ(*m.alpha, 0.035);
    EXPECT_FALSE(m.kappa);
    const auto c = io::parse_contract(json::parse(R"({"P":100,"T":10,"kappa":0.1})"));
    const auto merged = io::merge_contract(m, c, std::nullopt);
    EXPECT_EQ(merged.alpha, 0.035);
    EXPECT_EQ(merged.kappa, 0.1);
    EXPECT_EQ(merged.guarantee, 10.0);
}

TEST(Io, RejectsConflictsAndMissingFields) {
    EXPECT_THROW(io::parse_model(json::parse(R"({"v0":0.05})")), ParseError);
    EXPECT_THROW(io::parse_contract(json::parse(R"({"P":100,"T":2.5})")), ParseError);
    const auto m = io::parse_model(json::parse(R"({"v0":0.05,"kv":2,"thetav":0.05,"omegav":0.5,"rhov":-0.55,
        "r0":0.02,"kr":0.15,"omegar":0.015,"rhor":0.2,"alpha":0.035,"kappa":0.1})"));
    const auto c = io::parse_contract(json::parse(R"({"P":100,"T":10,"alpha":0.04})"));
    EXPECT_THROW(io::merge_contract(m, c, std::nullopt), ParseError);
    const auto bare = io::parse_contract(json::parse(R"({"P":100,"T":10})"));
    auto no_kappa = m;
    no_kappa.kappa.reset();
    EXPECT_THROW(io::merge_contract(no_kappa, bare, std::nullopt), ParseError);
}

TEST(Io, MortalityCsv) {
    const auto t = io::parse_mortality("year,death_probability\n1,0.01\n2,0.02\n");
    EXPECT_EQ(t.years(), 2);
    EXPECT_DOUBLE_EQ(t.survivor(2), 0.97);
    EXPECT_THROW(io::parse_mortality("year,q\n1,0.1\n"), ParseError);
    EXPECT_THROW(io::parse_mortality("year,death_probability\n2,0.1\n"), ParseError);
    EXPECT_THROW(io::parse_mortality("year,death_probability\n1,abc\n"), ParseError);
    EXPECT_THROW(io::parse_mortality("year,death_probability\n1,0.7\n2,0.7\n"), ParseError);
}

TEST(Io, TrainingCsvRoundTripsExactly) {
    std::vector<io::TrainingRow> rows{{table1_point(), 1.0011234567890123}, {table1_point(), 0.1 + 0.2}};
    const auto text = io::format_training(rows);
    const auto back = io::parse_training(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].value, 0.1 + 0.2);
    EXPECT_EQ(back[0].point.to_array(), table1_point().to_array());
    EXPECT_EQ(io::format_training(back), text);
    EXPECT_THROW(io::parse_training("a,b\n"), ParseError);
    EXPECT_THROW(io::parse_training(io::training_header() + "\n1,2,3\n"), ParseError);
}

TEST(Io, BundledFilesParse) {
    const std::filesystem::path data = GMWB_TEST_DATA_DIR;
    const auto m = io::load_model(data / "params_table1.json");
    EXPECT_EQ(m.params.rho_v, -0.55);
    const auto box = io::load_box(data / "box_table3.json");
    EXPECT_EQ(box[10].hi, 0.2);
    EXPECT_EQ(io::load_mortality(data / "mortality" / "zero_10y.csv").years(), 10);
    const auto g = io::load_mortality(data / "mortality" / "illustrative_gompertz_10y.csv");
    EXPECT_GT(g.survivor(10), 0.7);
    const auto c = io::load_contract(data / "contract_table1.json");
    EXPECT_EQ(c.maturity, 10);
}

TEST(Io, AtomicWriteLeavesNoTemporary) {
    const auto path = std::filesystem::temp_directory_path() / "gmwb_io_atomic.txt";
    io::write_atomically(path, "hello\n");
    EXPECT_EQ(io::read_text(path), "hello\n");
    auto tmp = path;
    tmp += ".tmp";
    EXPECT_FALSE(std::filesystem::exists(tmp));
    std::filesystem::remove(path);
}
