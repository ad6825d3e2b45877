// Regenerates the synthetic datasets under data/.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "elucid/synth.hpp"

namespace {

void write(const std::string& path, const elucid::Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << elucid::format_dataset(d);
  if (!out) {
    std::cerr << "io_error: cannot write " << path << "\n";
    std::exit(1);
  }
  std::cout << path << ": " << d.size() << " sentences, " << d.entity_count() << " entities\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  const std::uint64_t seed = 13;
  write(dir + "/separable.conll", elucid::synth::separable_dataset(250, seed));
  elucid::synth::CueTaskConfig cue;
  cue.seed = seed;
  write(dir + "/cue_task.conll", elucid::synth::cue_task_dataset(cue));
  write(dir + "/cue_source.conll", elucid::synth::cue_task_source(cue, 3, seed));
  return 0;
}
