#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "spikeir/checkpoint.hpp"
#include "spikeir/config.hpp"

using namespace spikeir;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "spikeir_ckpt_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

StudentConfig small_cfg() {
    StudentConfig c;
    c.channels = {3, 4, 5, 6};
    c.blocks_per_level = 1;
    c.time_steps = 2;
    return c;
}

} // namespace

TEST_CASE("save/load round trip restores every parameter bit-exactly") {
    ModelGraph a = build_student(small_cfg(), 123);
    auto path = temp_path("round.ckpt");
    save_checkpoint(a, path.string(), "model = student\n");

    ModelGraph b = build_student(small_cfg(), 999); // different init, same geometry
    load_checkpoint(b, path.string());
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].tensor.values() == b.params[i].tensor.values());

    CheckpointData raw = read_checkpoint(path.string());
    CHECK(raw.config_echo == "model = student\n");
    CHECK(raw.manifest.size() == a.params.size());
}

TEST_CASE("a corrupted payload byte trips the checksum") {
    ModelGraph g = build_student(small_cfg(), 5);
    auto path = temp_path("corrupt.ckpt");
    save_checkpoint(g, path.string(), "");
    // flip one byte inside the payload (well past the header)
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const std::streamoff size = f.tellg();
    f.seekp(size - 200);
    char byte;
    f.seekg(size - 200);
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x5a);
    f.seekp(size - 200);
    f.write(&byte, 1);
    f.close();
    CHECK_THROWS_AS(read_checkpoint(path.string()), CkptChecksumError);
}

TEST_CASE("bad magic and bad version are distinct failures") {
    auto path = temp_path("magic.ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE then some bytes";
    }
    CHECK_THROWS_AS(read_checkpoint(path.string()), CkptMagicError);

    ModelGraph g = build_student(small_cfg(), 5);
    auto vpath = temp_path("version.ckpt");
    save_checkpoint(g, vpath.string(), "");
    std::fstream f(vpath, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CHECK_THROWS_AS(read_checkpoint(vpath.string()), CkptVersionError);

    CHECK_THROWS_AS(read_checkpoint(temp_path("missing.ckpt").string()), CheckpointError);
}

TEST_CASE("loading into a mismatched graph names the first offending tensor") {
    ModelGraph g = build_student(small_cfg(), 5);
    auto path = temp_path("mismatch.ckpt");
    save_checkpoint(g, path.string(), "");

    StudentConfig other = small_cfg();
    other.channels = {3, 4, 5, 7}; // bottleneck width differs
    ModelGraph wrong = build_student(other, 5);
    try {
        load_checkpoint(wrong, path.string());
        FAIL("expected CkptManifestError");
    } catch (const CkptManifestError& e) {
        // the first mismatching tensor is the enc3 downsample into the bottleneck
        CHECK(std::string(e.what()).find("enc3.down.w") != std::string::npos);
    }

    StudentConfig fewer = small_cfg();
    fewer.blocks_per_level = 2;
    ModelGraph bigger = build_student(fewer, 5);
    CHECK_THROWS_AS(load_checkpoint(bigger, path.string()), CkptManifestError);
}

TEST_CASE("model echo rebuilds a geometry-compatible graph") {
    RunConfig rc;
    rc.channels = {3, 4, 5, 6};
    rc.blocks = 1;
    rc.timesteps = 2;
    ModelGraph g = build_student(rc.student_config(1), 10);
    auto path = temp_path("echo.ckpt");
    save_checkpoint(g, path.string(), model_echo(rc, true, 1));

    CheckpointData raw = read_checkpoint(path.string());
    ModelGraph rebuilt = graph_from_echo(raw.config_echo);
    CHECK(rebuilt.spiking);
    CHECK(rebuilt.time_steps == 2);
    load_checkpoint(rebuilt, path.string()); // manifest must line up
    for (std::size_t i = 0; i < g.params.size(); ++i)
        CHECK(rebuilt.params[i].tensor.values() == g.params[i].tensor.values());

    ModelGraph teacher = build_teacher(rc.teacher_config(1), 3);
    auto tpath = temp_path("echo_teacher.ckpt");
    save_checkpoint(teacher, tpath.string(), model_echo(rc, false, 1));
    ModelGraph trebuilt = graph_from_echo(read_checkpoint(tpath.string()).config_echo);
    CHECK_FALSE(trebuilt.spiking);
    load_checkpoint(trebuilt, tpath.string());
}
