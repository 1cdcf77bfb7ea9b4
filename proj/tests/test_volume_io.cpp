// SPDX-License-Identifier: MIT
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "json.hpp"
#include "segplan/error.hpp"
#include "segplan/io.hpp"
#include "segplan/planner.hpp"
#include "test_util.hpp"

using namespace segplan;
namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& b, std::size_t off, T v, bool big = false) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (big) std::reverse(raw, raw + sizeof(T));
    std::memcpy(b.data() + off, raw, sizeof(T));
}

/// Single-file NIfTI-1 built field by field: 348-byte header, 4-byte extension flag, payload.
std::vector<std::uint8_t> nifti_fixture(std::int16_t datatype = 4, bool big = false, float slope = 0.0f, float inter = 0.0f,
                                        const char* magic = "n+1") {
    std::vector<std::uint8_t> b(352, 0);
    put<std::int32_t>(b, 0, 348, big);
    const std::int16_t dims[8] = {3, 4, 4, 4, 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) put<std::int16_t>(b, 40 + 2 * i, dims[i], big);
    put<std::int16_t>(b, 70, datatype, big);
    put<std::int16_t>(b, 72, datatype == 16 ? 32 : 16, big);
    const float pixdim[8] = {1, 1, 1, 1, 0, 0, 0, 0};
    for (int i = 0; i < 8; ++i) put<float>(b, 76 + 4 * i, pixdim[i], big);
    put<float>(b, 108, 352.0f, big);
    put<float>(b, 112, slope, big);
    put<float>(b, 116, inter, big);
    std::memcpy(b.data() + 344, magic, 4);
    for (std::int16_t v = 0; v < 64; ++v) {
        if (datatype == 16) {
            const std::size_t off = b.size();
            b.resize(off + 4);
            put<float>(b, off, static_cast<float>(v), big);
        } else {
            const std::size_t off = b.size();
            b.resize(off + 2);
            put<std::int16_t>(b, off, v, big);
        }
    }
    return b;
}

void write_raw(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_gzip_independent(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    REQUIRE(f != nullptr);
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
}

/// Value of voxel (i0, i1, i2) in the fixture: NIfTI index x + 4y + 16z with x = i2, y = i1, z = i0.
float fixture_value(int i0, int i1, int i2) { return static_cast<float>(i2 + 4 * i1 + 16 * i0); }

}  // namespace

TEST_SUITE("volume_io") {
    TEST_CASE("fixture bytes follow the NIfTI-1 layout") {
        const auto b = nifti_fixture();
        CHECK(b.size() == 352 + 128);
        CHECK(b[0] == 0x5c);
        CHECK(b[1] == 0x01);
        CHECK(b[40] == 3);
        CHECK(b[70] == 4);
        CHECK(std::string(reinterpret_cast<const char*>(b.data() + 344)) == "n+1");
        CHECK(b[352 + 2 * 63] == 63);
    }

    TEST_CASE("read_nifti decodes int16 fixture with a2 fastest") {
        const auto dir = testutil::scratch("nifti_plain");
        write_raw(dir / "a.nii", nifti_fixture());
        const Volume v = read_nifti(dir / "a.nii");
        CHECK(v.shape == Shape3{4, 4, 4});
        CHECK(v.spacing == Spacing3{1, 1, 1});
        for (int i0 = 0; i0 < 4; ++i0)
            for (int i1 = 0; i1 < 4; ++i1)
                for (int i2 = 0; i2 < 4; ++i2) CHECK(v.at(i0, i1, i2) == fixture_value(i0, i1, i2));
    }

    TEST_CASE("gzip compression is transparent") {
        const auto dir = testutil::scratch("nifti_gz");
        write_raw(dir / "a.nii", nifti_fixture());
        write_gzip_independent(dir / "a.nii.gz", nifti_fixture());
        CHECK(read_nifti(dir / "a.nii.gz") == read_nifti(dir / "a.nii"));
    }

    TEST_CASE("big-endian header is detected") {
        const auto dir = testutil::scratch("nifti_be");
        write_raw(dir / "le.nii", nifti_fixture());
        write_raw(dir / "be.nii", nifti_fixture(4, true));
        CHECK(read_nifti(dir / "be.nii") == read_nifti(dir / "le.nii"));
    }

    TEST_CASE("slope and intercept rescale intensities") {
        const auto dir = testutil::scratch("nifti_scl");
        write_raw(dir / "a.nii", nifti_fixture(4, false, 2.0f, -1.0f));
        const Volume v = read_nifti(dir / "a.nii");
        CHECK(v.at(1, 2, 3) == doctest::Approx(2.0 * fixture_value(1, 2, 3) - 1.0));
    }

    TEST_CASE("float32 payload") {
        const auto dir = testutil::scratch("nifti_f32");
        write_raw(dir / "a.nii", nifti_fixture(16));
        CHECK(read_nifti(dir / "a.nii").at(3, 3, 3) == 63.0f);
    }

    TEST_CASE("bad magic, datatype, truncation and layout are rejected") {
        const auto dir = testutil::scratch("nifti_bad");
        write_raw(dir / "magic.nii", nifti_fixture(4, false, 0, 0, "xxx"));
        CHECK_THROWS_WITH_AS(read_nifti(dir / "magic.nii"), doctest::Contains("BadMagic"), Error);
        write_raw(dir / "dtype.nii", nifti_fixture(128));
        CHECK_THROWS_WITH_AS(read_nifti(dir / "dtype.nii"), doctest::Contains("UnsupportedDatatype"), Error);
        auto shortb = nifti_fixture();
        shortb.resize(shortb.size() - 1);
        write_raw(dir / "short.nii", shortb);
        CHECK_THROWS_WITH_AS(read_nifti(dir / "short.nii"), doctest::Contains("TruncatedFile"), Error);
        auto four = nifti_fixture();
        put<std::int16_t>(four, 40, 4);
        put<std::int16_t>(four, 48, 2);
        write_raw(dir / "4d.nii", four);
        CHECK_THROWS_WITH_AS(read_nifti(dir / "4d.nii"), doctest::Contains("UnsupportedLayout"), Error);
        auto gz = nifti_fixture();
        write_gzip_independent(dir / "cut.nii.gz", gz);
        auto bytes = std::vector<std::uint8_t>();
        {
            std::ifstream in(dir / "cut.nii.gz", std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), {});
        }
        bytes.resize(bytes.size() / 2);
        write_raw(dir / "cut.nii.gz", bytes);
        CHECK_THROWS_WITH_AS(read_nifti(dir / "cut.nii.gz"), doctest::Contains("TruncatedFile"), Error);
    }

    TEST_CASE("every truncation point yields TruncatedFile") {
        const auto dir = testutil::scratch("nifti_trunc");
        const auto full = nifti_fixture();
        for (std::size_t len : {std::size_t{0}, std::size_t{100}, std::size_t{347}, std::size_t{351}, std::size_t{400}, full.size() - 1}) {
            write_raw(dir / "t.nii", std::vector<std::uint8_t>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(len)));
            CHECK_THROWS_WITH_AS(read_nifti(dir / "t.nii"), doctest::Contains("TruncatedFile"), Error);
        }
    }

    TEST_CASE("NIfTI to native round trip") {
        const auto dir = testutil::scratch("nifti_native");
        write_raw(dir / "a.nii", nifti_fixture());
        const Volume v = read_nifti(dir / "a.nii");
        write_volume(v, dir / "a.json");
        const Volume back = read_volume(dir / "a.json");
        CHECK(back == v);
        Volume w(Shape3{3, 5, 7}, Spacing3{2.5, 0.7, 0.7}, 0.0f, "CT");
        for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = static_cast<float>(i) * 0.37f - 11.0f;
        write_nifti(w, dir / "w.nii.gz");
        const Volume wn = read_volume(dir / "w.nii.gz");
        CHECK(wn.shape == w.shape);
        for (int a = 0; a < 3; ++a) CHECK(wn.spacing[a] == doctest::Approx(w.spacing[a]).epsilon(1e-6));
        CHECK(wn.data == w.data);
    }

    TEST_CASE("native label and float volumes round trip exactly") {
        const auto dir = testutil::scratch("native");
        LabelVolume l(Shape3{2, 2, 2}, Spacing3{1, 1, 1}, 1);
        l.data = {0, 1, 1, 0, 1, 0, 0, 1};
        write_volume(l, dir / "l.json");
        CHECK(read_label_volume(dir / "l.json") == l);
        Volume v(Shape3{2, 3, 4}, Spacing3{1.5, 0.5, 0.25});
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = 1.0f / static_cast<float>(i + 3);
        write_volume(v, dir / "v.json");
        CHECK(read_volume(dir / "v.json") == v);
    }

    TEST_CASE("read_case validates geometry and channels") {
        const auto dir = testutil::scratch("cases");
        Case c;
        c.id = "brain";
        for (const char* m : {"T1", "T1c", "T2", "FLAIR"}) {
            Volume v(Shape3{3, 4, 5}, Spacing3{1, 1, 1}, 1.0f, m);
            c.channels.push_back(v);
        }
        c.label = LabelVolume(Shape3{3, 4, 5}, Spacing3{1, 1, 1}, 3);
        c.label->data[7] = 3;
        const fs::path manifest = write_case(c, dir);
        const Case back = read_case(manifest);
        CHECK(back.channels.size() == 4);
        CHECK(back.channels[3].modality == "FLAIR");
        REQUIRE(back.label.has_value());
        CHECK(back.label->data == c.label->data);

        write_volume(Volume(Shape3{3, 4, 6}, Spacing3{1, 1, 1}), dir / "odd.json");
        nlohmann::json m{{"schema_version", 1}, {"id", "bad"}, {"channels", {{{"path", "brain_0.json"}}, {{"path", "odd.json"}}}}};
        write_text(dir / "bad.case.json", m.dump());
        CHECK_THROWS_WITH_AS(read_case(dir / "bad.case.json"), doctest::Contains("GeometryMismatch"), Error);
        nlohmann::json missing{{"schema_version", 1}, {"id", "gone"}, {"channels", {{{"path", "nope.json"}}}}};
        write_text(dir / "gone.case.json", missing.dump());
        CHECK_THROWS_WITH_AS(read_case(dir / "gone.case.json"), doctest::Contains("MissingChannel"), Error);
    }

    TEST_CASE("case with one channel and label from manifest") {
        const auto dir = testutil::scratch("case_one");
        Volume v(Shape3{2, 2, 2}, Spacing3{2, 1, 1}, 5.0f, "MRI");
        write_volume(v, dir / "img.json");
        LabelVolume l(Shape3{2, 2, 2}, Spacing3{2, 1, 1}, 1);
        l.data[0] = 1;
        write_volume(l, dir / "seg.json");
        nlohmann::json m{{"schema_version", 1}, {"id", "one"}, {"channels", {{{"path", "img.json"}, {"modality", "MRI"}}}},
                         {"label", "seg.json"}, {"num_classes", 1}};
        write_text(dir / "one.case.json", m.dump());
        const Case c = read_case(dir / "one.case.json");
        CHECK(c.label.has_value());
        CHECK(c.channels.front().modality == "MRI");
        CHECK(list_case_manifests(dir).size() == 1);
    }

    TEST_CASE("plan documents round trip and carry the compact representation") {
        UNetPlan plan = plan_unet({18, 237, 208}, {5.0, 1.56, 1.56}, 200.0 * 9 * 256 * 216, reference_memory_model_3d(),
                                  PlanKind::U3D_FULLRES);
        plan.normalization = {NormalizationScheme{}};
        PipelineFingerprint p;
        p.plans = {plan};
        p.tool_version = tool_version();
        p.fingerprint_ref = "fp.json";
        const std::string doc = plan_to_json(p);
        const auto j = nlohmann::json::parse(doc);
        CHECK(j["plans"][0]["kernel_sizes"] ==
              nlohmann::json::parse("[[1,3,3],[3,3,3],[3,3,3],[3,3,3],[3,3,3],[3,3,3]]"));
        CHECK(j["plans"][0]["strides"] == nlohmann::json::parse("[[1,2,2],[2,2,2],[2,2,2],[1,2,2],[1,2,2]]"));
        CHECK(plan_from_json(doc) == p);

        const auto dir = testutil::scratch("plan_io");
        write_plan(p, dir / "plan.json");
        CHECK(read_plan(dir / "plan.json") == p);

        auto bad = j;
        bad["schema_version"] = 99;
        CHECK_THROWS_WITH_AS(plan_from_json(bad.dump()), doctest::Contains("SchemaVersionMismatch"), Error);
    }
}
