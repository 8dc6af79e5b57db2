# Scripts
