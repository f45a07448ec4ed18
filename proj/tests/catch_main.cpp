// Catch2 provides its own main via the amalgamated translation unit; this
// file only exists so the static library has a stable anchor.
