"""Command-line surface for moesd."""
