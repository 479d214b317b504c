// CLI surface checks: exit-code mapping and output artifacts.
// Arguments: <cli-binary> <scratch-dir> <configs-dir>.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::cout << (ok ? "ok: " : "FAILED: ") << what << "\n";
  if (!ok) ++failures;
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: test_cli <cli-binary> <scratch-dir> <configs-dir>\n";
    return 2;
  }
  const std::string cli = std::string("\"") + argv[1] + "\"";
  const fs::path scratch = fs::path(argv[2]) / "cli";
  const fs::path configs = argv[3];
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const std::string quiet = " > /dev/null 2>&1";

  // Degenerate field direction: the single-frequency scheme has no response.
  check(run_command(cli + " --config \"" + (configs / "degenerate.json").string() +
                    "\" --out \"" + scratch.string() +
                    "\" sensitivity --scheme single" + quiet) == 3,
        "zero-gradient geometry exits with code 3");

  // The multi-frequency scheme handles the same direction.
  check(run_command(cli + " --config \"" + (configs / "degenerate.json").string() +
                    "\" --out \"" + (scratch / "deg").string() +
                    "\" sensitivity --scheme multi" + quiet) == 0,
        "multi-frequency scheme handles the degenerate direction");

  check(run_command(cli + " --config \"" + (scratch / "missing.json").string() +
                    "\" --out \"" + scratch.string() + "\" odmr" + quiet) == 1,
        "missing config exits with code 1");

  const fs::path bad_seq = scratch / "bad.seq";
  {
    std::ofstream out(bad_seq);
    out << "seq v1 tau=1e-5 mode=multi_frequency(z)\n";
    out << "pulse t=0 dur=1e-7 angle=twopi ch=1,2,3,4 phase=0,0,0,0\n";
  }
  check(run_command(cli + " seq check \"" + bad_seq.string() + "\"" + quiet) == 1,
        "malformed sequence file exits with code 1");

  const fs::path out_dir = scratch / "run";
  const fs::path seq_file = out_dir / "program.seq";
  check(run_command(cli + " --config \"" + (configs / "ideal.json").string() + "\" --out \"" +
                    out_dir.string() + "\" echo-sweep --emit-seq \"" + seq_file.string() + "\"" +
                    quiet) == 0,
        "echo sweep on a valid config succeeds");
  check(fs::exists(out_dir / "echo_sweep.csv") && fs::exists(out_dir / "echo_sweep.json"),
        "echo sweep writes its csv and json outputs");
  check(run_command(cli + " seq check \"" + seq_file.string() + "\"" + quiet) == 0,
        "emitted sequence file round-trips through the checker");

  // Re-running the emitted program reproduces the built-in sweep exactly.
  const fs::path replay_dir = scratch / "replay";
  check(run_command(cli + " --config \"" + (configs / "ideal.json").string() + "\" --out \"" +
                    replay_dir.string() + "\" echo-sweep --sequence \"" + seq_file.string() +
                    "\"" + quiet) == 0,
        "echo sweep replays an external sequence file");
  {
    std::ifstream a(out_dir / "echo_sweep.csv", std::ios::binary);
    std::ifstream b(replay_dir / "echo_sweep.csv", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    check(!sa.empty() && sa == sb, "replayed sweep is byte-identical to the built one");
  }

  std::cout << (failures == 0 ? "all cli checks passed\n" : "cli checks failed\n");
  return failures == 0 ? 0 : 1;
}
